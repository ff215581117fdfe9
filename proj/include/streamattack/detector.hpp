#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "streamattack/forecaster.hpp"
#include "streamattack/tensor.hpp"

namespace streamattack {

inline constexpr double kLidCap = 1e6;
inline constexpr double kLidDistanceFloor = 1e-12;

struct LidConfig {
  std::size_t k = 20;
  std::size_t batch = 100;
  bool use_pooled = true;  // post-pool trunk activations
  bool use_hidden = true;  // pre-head dense activations

  std::size_t layer_count() const { return (use_pooled ? 1 : 0) + (use_hidden ? 1 : 0); }
  void validate() const;
  bool operator==(const LidConfig&) const = default;
};

/// Maximum-likelihood LID from the k nearest distances (any order):
/// -1 / mean(log(r_i / r_max)). Zero distances are floored at
/// kLidDistanceFloor; an all-equal neighbourhood returns kLidCap.
double lid_from_distances(std::span<const double> distances);

/// LID of `query` against `reference` using its k nearest Euclidean
/// neighbours. `exclude` drops one reference index (the query itself).
double lid_estimate(std::span<const double> query, const std::vector<std::vector<double>>& reference,
                    std::size_t k, std::optional<std::size_t> exclude = std::nullopt);

/// Per-layer LID features against a registered batch of clean windows.
class LidFeaturizer {
 public:
  LidFeaturizer() = default;
  LidFeaturizer(const ForecasterModel& model, std::span<const Tensor2> reference_windows,
                LidConfig config);

  bool has_reference() const { return model_ != nullptr; }
  const LidConfig& config() const { return config_; }

  /// One LID value per selected layer. Throws UsageError without a reference.
  std::vector<double> featurize(const Tensor2& window) const;

 private:
  const ForecasterModel* model_ = nullptr;
  LidConfig config_;
  std::vector<std::vector<double>> pooled_ref_;
  std::vector<std::vector<double>> hidden_ref_;
};

struct BinaryMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Positive class = attacked. Zero denominators yield 0.
BinaryMetrics binary_metrics(const std::vector<bool>& truth, const std::vector<bool>& predicted);

/// Logistic regression over standardized LID features.
struct DetectorModel {
  LidConfig lid_config;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::vector<double> weights;  // one per selected layer
  double bias = 0.0;
  double threshold = 0.5;

  double score(std::span<const double> features) const;
  bool flag(std::span<const double> features) const { return score(features) >= threshold; }

  bool operator==(const DetectorModel&) const = default;
};

struct DetectorFit {
  DetectorModel model;
  BinaryMetrics heldout;  // at the chosen threshold
};

/// Trains on a seeded 80% split and picks the threshold that maximizes F1
/// on the remaining 20%.
DetectorFit fit_detector_features(const std::vector<std::vector<double>>& clean,
                                  const std::vector<std::vector<double>>& adversarial,
                                  const LidConfig& config, std::uint64_t seed);

DetectorFit fit_detector(const LidFeaturizer& featurizer, std::span<const Tensor2> clean,
                         std::span<const Tensor2> adversarial, std::uint64_t seed);

void save_detector(const DetectorModel& detector, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

}  // namespace streamattack
