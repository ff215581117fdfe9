#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "streamattack/layers.hpp"
#include "streamattack/tensor.hpp"

namespace streamattack {

/// Layer sizes of the fixed architecture
///   conv1d -> relu -> maxpool -> dropout -> dense -> relu -> dense(outputs).
struct ConvNetShape {
  std::size_t window = 60;
  std::size_t features = 7;
  std::size_t filters = 16;
  std::size_t kernel_width = 5;
  std::size_t stride = 1;
  std::size_t pool = 2;
  std::size_t hidden = 32;
  std::size_t outputs = 3;

  std::size_t conv_len() const { return (window - kernel_width) / stride + 1; }
  std::size_t pooled_len() const { return conv_len() / pool; }
  std::size_t flat_size() const { return pooled_len() * filters; }

  /// Throws ConfigError when the sizes cannot form a network.
  void validate() const;

  bool operator==(const ConvNetShape&) const = default;
};

struct ConvNetParams {
  ConvNetShape shape;
  std::vector<Tensor2> kernels;  // filters x [kernel_width x features]
  std::vector<double> conv_bias;
  Tensor2 hidden_weights;  // [hidden x flat_size]
  std::vector<double> hidden_bias;
  Tensor2 head_weights;  // [outputs x hidden]
  std::vector<double> head_bias;

  static ConvNetParams zeros(const ConvNetShape& shape);
  /// He-uniform weights, zero biases.
  static ConvNetParams he_uniform(const ConvNetShape& shape, std::mt19937_64& rng);

  /// Mutable views over every parameter block, in a fixed order
  /// (kernels..., conv_bias, hidden_weights, hidden_bias, head_weights, head_bias).
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  std::size_t parameter_count() const;

  bool operator==(const ConvNetParams&) const = default;
};

/// Everything the backward pass needs from one forward evaluation.
struct ForwardTape {
  const ConvNetParams* owner = nullptr;
  Tensor2 input;
  Tensor2 conv_pre;
  Tensor2 conv_act;
  PoolResult pooled;
  std::vector<double> dropout_mask;  // empty when dropout is off
  Tensor2 flat;                      // pooled, flattened, after dropout
  Tensor2 hidden_pre;
  Tensor2 hidden_act;
  std::vector<double> outputs;
};

struct NetworkGrads {
  Tensor2 d_input;
  ConvNetParams d_params;
};

/// Forward pass. Pass an rng and a positive rate to train with dropout;
/// without an rng the network is deterministic.
ForwardTape network_forward(const ConvNetParams& params, const Tensor2& input,
                            double dropout_rate = 0.0, std::mt19937_64* rng = nullptr);

/// Outputs only, dropout off.
std::vector<double> network_predict(const ConvNetParams& params, const Tensor2& input);

/// Reverse pass given dLoss/dOutput for each output head. The tape must
/// come from network_forward on the same `params`.
NetworkGrads network_backward(const ConvNetParams& params, const ForwardTape& tape,
                              std::span<const double> d_outputs);

}  // namespace streamattack
