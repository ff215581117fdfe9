#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

namespace streamattack {

/// Rolling history of the last M interval widths and the adaptive
/// threshold T_t = nominal-rank (1 - attack_rate) quantile of that history.
/// The current width joins the history before T_t is computed.
class ThresholdState {
 public:
  /// `warmup` steps never fire; the effective warm-up is min(M, warmup).
  ThresholdState(std::size_t history_capacity, double attack_rate, std::size_t warmup);
  ThresholdState(std::size_t history_capacity, double attack_rate)
      : ThresholdState(history_capacity, attack_rate, history_capacity) {}

  /// Pushes W_t (evicting the oldest when full) and returns T_t.
  double update_threshold(double width);

  /// True iff warm-up is over and width >= T_t. Call after update_threshold.
  bool should_attack(double width) const;

  std::optional<double> current_threshold() const { return threshold_; }
  double attack_rate() const { return attack_rate_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t warmup() const { return warmup_; }
  std::size_t steps() const { return steps_; }
  bool warmed_up() const { return steps_ > warmup_; }
  const std::deque<double>& history() const { return history_; }

 private:
  std::size_t capacity_;
  double attack_rate_;
  std::size_t warmup_;
  std::size_t steps_ = 0;
  std::deque<double> history_;
  std::vector<double> sorted_;
  std::optional<double> threshold_;
};

}  // namespace streamattack
