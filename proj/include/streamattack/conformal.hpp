#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "streamattack/buffer.hpp"
#include "streamattack/forecaster.hpp"

namespace streamattack {

struct IntervalRecord {
  double lo = 0.0;
  double hi = 0.0;
  double width = 0.0;
};

/// max(q_lo - y, y - q_hi): negative iff y is strictly inside [q_lo, q_hi].
double conformity_score(double q_lo, double q_hi, double y);

/// Split-conformal correction for a quantile regressor. Immutable once built.
class ConformalCalibrator {
 public:
  /// correction = k-th smallest score, k = ceil((1 - miscoverage)(1 + 1/n) n)
  /// clamped to n.
  static ConformalCalibrator from_scores(std::vector<double> scores, double miscoverage);

  double miscoverage() const { return miscoverage_; }
  double correction() const { return correction_; }
  std::size_t calib_size() const { return scores_.size(); }
  std::span<const double> scores() const { return scores_; }

  /// [q_lo - c, q_hi + c]; an inverted result collapses to its midpoint.
  IntervalRecord interval(double q_lo, double q_hi) const;

  bool operator==(const ConformalCalibrator&) const = default;

 private:
  double miscoverage_ = 0.1;
  double correction_ = 0.0;
  std::vector<double> scores_;
};

/// Scores every calibration window with the model and builds the calibrator.
ConformalCalibrator calibrate(const ForecasterModel& model, std::span<const WindowSample> calib,
                              double miscoverage);

IntervalRecord conformal_interval(const ConformalCalibrator& calibrator, double q_lo, double q_hi);

void save_calibrator(const ConformalCalibrator& calibrator, const std::filesystem::path& path);
ConformalCalibrator load_calibrator(const std::filesystem::path& path);

}  // namespace streamattack
