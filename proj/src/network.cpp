#include "streamattack/network.hpp"

#include <cmath>
#include <string>

#include "streamattack/error.hpp"

namespace streamattack {

void ConvNetShape::validate() const {
  if (window == 0 || features == 0 || filters == 0 || kernel_width == 0 || stride == 0 ||
      pool == 0 || hidden == 0 || outputs == 0) {
    throw ConfigError("network shape: all sizes must be positive");
  }
  if (kernel_width > window) {
    throw ConfigError("network shape: kernel width " + std::to_string(kernel_width) +
                      " exceeds window " + std::to_string(window));
  }
  if (pooled_len() == 0) throw ConfigError("network shape: pool larger than conv output");
}

ConvNetParams ConvNetParams::zeros(const ConvNetShape& shape) {
  shape.validate();
  ConvNetParams p;
  p.shape = shape;
  p.kernels.assign(shape.filters, Tensor2(shape.kernel_width, shape.features));
  p.conv_bias.assign(shape.filters, 0.0);
  p.hidden_weights = Tensor2(shape.hidden, shape.flat_size());
  p.hidden_bias.assign(shape.hidden, 0.0);
  p.head_weights = Tensor2(shape.outputs, shape.hidden);
  p.head_bias.assign(shape.outputs, 0.0);
  return p;
}

ConvNetParams ConvNetParams::he_uniform(const ConvNetShape& shape, std::mt19937_64& rng) {
  ConvNetParams p = zeros(shape);
  auto fill = [&rng](std::span<double> w, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : w) v = dist(rng);
  };
  for (auto& k : p.kernels) fill(k.values(), shape.kernel_width * shape.features);
  fill(p.hidden_weights.values(), shape.flat_size());
  fill(p.head_weights.values(), shape.hidden);
  return p;
}

std::vector<std::span<double>> ConvNetParams::blocks() {
  std::vector<std::span<double>> out;
  for (auto& k : kernels) out.push_back(k.values());
  out.emplace_back(conv_bias);
  out.push_back(hidden_weights.values());
  out.emplace_back(hidden_bias);
  out.push_back(head_weights.values());
  out.emplace_back(head_bias);
  return out;
}

std::vector<std::span<const double>> ConvNetParams::blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& k : kernels) out.push_back(k.values());
  out.emplace_back(conv_bias);
  out.push_back(hidden_weights.values());
  out.emplace_back(hidden_bias);
  out.push_back(head_weights.values());
  out.emplace_back(head_bias);
  return out;
}

std::size_t ConvNetParams::parameter_count() const {
  std::size_t n = 0;
  for (auto b : blocks()) n += b.size();
  return n;
}

ForwardTape network_forward(const ConvNetParams& params, const Tensor2& input,
                            double dropout_rate, std::mt19937_64* rng) {
  const auto& s = params.shape;
  if (input.rows() != s.window || input.cols() != s.features) {
    throw UsageError("network input is " + std::to_string(input.rows()) + "x" +
                     std::to_string(input.cols()) + ", model expects " +
                     std::to_string(s.window) + "x" + std::to_string(s.features));
  }
  ForwardTape tape;
  tape.owner = &params;
  tape.input = input;
  tape.conv_pre = conv1d_forward(input, params.kernels, params.conv_bias, s.stride);
  tape.conv_act = relu_forward(tape.conv_pre);
  tape.pooled = maxpool1d_forward(tape.conv_act, s.pool);
  if (rng != nullptr && dropout_rate > 0.0) {
    tape.dropout_mask = dropout_mask(tape.pooled.output.size(), dropout_rate, *rng);
  }
  const Tensor2 dropped = dropout_apply(tape.pooled.output, tape.dropout_mask);
  tape.flat = Tensor2(dropped.size(), 1);
  std::copy(dropped.values().begin(), dropped.values().end(), tape.flat.values().begin());
  tape.hidden_pre = dense_forward(tape.flat, params.hidden_weights, params.hidden_bias);
  tape.hidden_act = relu_forward(tape.hidden_pre);
  const Tensor2 out = dense_forward(tape.hidden_act, params.head_weights, params.head_bias);
  tape.outputs.assign(out.values().begin(), out.values().end());
  return tape;
}

std::vector<double> network_predict(const ConvNetParams& params, const Tensor2& input) {
  return network_forward(params, input).outputs;
}

NetworkGrads network_backward(const ConvNetParams& params, const ForwardTape& tape,
                              std::span<const double> d_outputs) {
  if (tape.owner != &params || tape.outputs.empty()) {
    throw UsageError("backward called without a matching forward pass");
  }
  const auto& s = params.shape;
  if (d_outputs.size() != s.outputs) throw UsageError("backward: wrong number of output gradients");

  NetworkGrads g;
  g.d_params.shape = s;

  Tensor2 d_out(s.outputs, 1, std::vector<double>(d_outputs.begin(), d_outputs.end()));
  LayerGrads head = dense_backward(tape.hidden_act, params.head_weights, d_out);
  g.d_params.head_weights = std::move(head.d_params[0]);
  g.d_params.head_bias.assign(head.d_params[1].values().begin(), head.d_params[1].values().end());

  const Tensor2 d_hidden_pre = relu_backward(tape.hidden_pre, head.d_input);
  LayerGrads hidden = dense_backward(tape.flat, params.hidden_weights, d_hidden_pre);
  g.d_params.hidden_weights = std::move(hidden.d_params[0]);
  g.d_params.hidden_bias.assign(hidden.d_params[1].values().begin(),
                                hidden.d_params[1].values().end());

  // Unflatten and undo dropout.
  Tensor2 d_pooled(s.pooled_len(), s.filters);
  std::copy(hidden.d_input.values().begin(), hidden.d_input.values().end(),
            d_pooled.values().begin());
  if (!tape.dropout_mask.empty()) d_pooled = dropout_apply(d_pooled, tape.dropout_mask);

  const Tensor2 d_conv_act = maxpool1d_backward(tape.pooled, tape.conv_act.rows(), d_pooled);
  const Tensor2 d_conv_pre = relu_backward(tape.conv_pre, d_conv_act);
  LayerGrads conv = conv1d_backward(tape.input, params.kernels, s.stride, d_conv_pre);
  g.d_params.conv_bias.assign(conv.d_params.back().values().begin(),
                              conv.d_params.back().values().end());
  conv.d_params.pop_back();
  g.d_params.kernels = std::move(conv.d_params);
  g.d_input = std::move(conv.d_input);
  return g;
}

}  // namespace streamattack
