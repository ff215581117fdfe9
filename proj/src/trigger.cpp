#include "streamattack/trigger.hpp"

#include <algorithm>
#include <cmath>

#include "streamattack/error.hpp"
#include "streamattack/quantile.hpp"

namespace streamattack {

ThresholdState::ThresholdState(std::size_t history_capacity, double attack_rate, std::size_t warmup)
    : capacity_(history_capacity), attack_rate_(attack_rate),
      warmup_(std::min(history_capacity, warmup)) {
  if (history_capacity == 0) throw ConfigError("threshold history capacity must be >= 1");
  if (!(attack_rate > 0.0 && attack_rate < 1.0)) throw ConfigError("attack rate must lie in (0,1)");
}

double ThresholdState::update_threshold(double width) {
  if (!(width >= 0.0) || !std::isfinite(width)) throw UsageError("interval width must be finite and >= 0");
  if (history_.size() == capacity_) {
    const double old = history_.front();
    history_.pop_front();
    sorted_.erase(std::lower_bound(sorted_.begin(), sorted_.end(), old));
  }
  history_.push_back(width);
  sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), width), width);
  ++steps_;
  const std::size_t k = nominal_rank(1.0 - attack_rate_, sorted_.size());
  threshold_ = sorted_[k - 1];
  return *threshold_;
}

bool ThresholdState::should_attack(double width) const {
  if (!threshold_ || !warmed_up()) return false;
  return width >= *threshold_;
}

}  // namespace streamattack
