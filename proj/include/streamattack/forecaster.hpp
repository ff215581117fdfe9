#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "streamattack/buffer.hpp"
#include "streamattack/network.hpp"
#include "streamattack/tensor.hpp"

namespace streamattack {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  /// window and features are taken from the samples at train time.
  ConvNetShape architecture;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  OptimizerKind optimizer = OptimizerKind::Adam;
  /// Interval miscoverage; quantile heads train at miscoverage/2 and 1 - miscoverage/2.
  double miscoverage = 0.1;
  /// One trunk with three heads, or three independent single-output networks.
  bool shared_trunk = true;
  std::size_t min_samples = 100;

  void validate() const;
  /// Canonical key=value text, used for the config hash.
  std::string canonical() const;
  bool operator==(const TrainConfig&) const = default;
};

struct ForecastOutput {
  double y_hat = 0.0;
  double q_lo = 0.0;
  double q_hi = 0.0;
};

/// Intermediate representations used by the detector.
struct Activations {
  std::vector<double> pooled;  // post-pool trunk features
  std::vector<double> hidden;  // pre-head dense activations
};

class ForecasterModel {
 public:
  ForecasterModel() = default;
  ForecasterModel(TrainConfig config, std::uint64_t seed, std::vector<ConvNetParams> nets);

  const TrainConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ConvNetParams>& networks() const { return nets_; }
  std::size_t window() const { return nets_.front().shape.window; }
  std::size_t features() const { return nets_.front().shape.features; }
  double lower_level() const { return config_.miscoverage / 2.0; }
  double upper_level() const { return 1.0 - config_.miscoverage / 2.0; }

  /// Deterministic forecast; quantiles are swapped if they cross.
  ForecastOutput predict(const Tensor2& x) const;

  /// d/dx of scale * (y_hat(x) - y_true)^2, dropout off.
  Tensor2 input_gradient(const Tensor2& x, double y_true, double scale = 1.0) const;

  /// Representations of the point-forecast network.
  Activations activations(const Tensor2& x) const;

  /// Hash over every parameter's bit pattern.
  std::uint64_t parameter_hash() const;

  bool operator==(const ForecasterModel&) const = default;

 private:
  void check_input(const Tensor2& x) const;

  TrainConfig config_;
  std::uint64_t seed_ = 0;
  std::vector<ConvNetParams> nets_;
};

/// Mini-batch training on MSE(point) + pinball(lower) + pinball(upper).
/// Deterministic for a given seed.
ForecasterModel train_forecaster(std::span<const WindowSample> samples, const TrainConfig& config,
                                 std::uint64_t seed);

/// Writes `<stem>.bin` (versioned flat parameters) and `<stem>.manifest`.
void save_model(const ForecasterModel& model, const std::filesystem::path& stem);
ForecasterModel load_model(const std::filesystem::path& stem);

}  // namespace streamattack
