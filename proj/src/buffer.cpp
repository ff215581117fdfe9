#include "streamattack/buffer.hpp"

#include <algorithm>
#include <string>

#include "streamattack/error.hpp"

namespace streamattack {

RollingBuffer::RollingBuffer(std::size_t capacity, std::size_t dims, std::size_t target_index)
    : capacity_(capacity), dims_(dims), target_index_(target_index) {
  if (capacity == 0) throw ConfigError("buffer capacity must be >= 1");
  if (dims == 0) throw ConfigError("buffer needs at least one feature");
  if (target_index >= dims) throw ConfigError("buffer target index out of range");
}

std::optional<std::vector<double>> RollingBuffer::push(std::span<const double> row) {
  if (row.size() != dims_) {
    throw UsageError("buffer push: row has " + std::to_string(row.size()) + " values, expected " +
                     std::to_string(dims_));
  }
  std::optional<std::vector<double>> evicted;
  if (rows_.size() == capacity_) {
    evicted = std::move(rows_.front());
    rows_.pop_front();
  }
  rows_.emplace_back(row.begin(), row.end());
  ++pushed_;

  if (!frozen_ && rows_.size() == capacity_) {
    norm_min_.assign(dims_, 0.0);
    norm_max_.assign(dims_, 0.0);
    for (std::size_t c = 0; c < dims_; ++c) {
      auto [lo, hi] = std::minmax_element(rows_.begin(), rows_.end(),
                                          [c](const auto& a, const auto& b) { return a[c] < b[c]; });
      norm_min_[c] = (*lo)[c];
      norm_max_[c] = (*hi)[c];
    }
    frozen_ = true;
  }
  return evicted;
}

void RollingBuffer::require_frozen() const {
  if (!frozen_) throw UsageError("normalization bounds are not frozen until the buffer first fills");
}

double RollingBuffer::normalize_value(std::size_t feature, double v) const {
  require_frozen();
  const double span = norm_max_[feature] - norm_min_[feature];
  if (span == 0.0) return 0.0;
  return (v - norm_min_[feature]) / span;
}

double RollingBuffer::denormalize_value(std::size_t feature, double v) const {
  require_frozen();
  return norm_min_[feature] + v * (norm_max_[feature] - norm_min_[feature]);
}

std::vector<double> RollingBuffer::normalize(std::span<const double> row) const {
  if (row.size() != dims_) throw UsageError("normalize: dimension mismatch");
  std::vector<double> out(dims_);
  for (std::size_t c = 0; c < dims_; ++c) out[c] = normalize_value(c, row[c]);
  return out;
}

std::vector<double> RollingBuffer::denormalize(std::span<const double> row) const {
  if (row.size() != dims_) throw UsageError("denormalize: dimension mismatch");
  std::vector<double> out(dims_);
  for (std::size_t c = 0; c < dims_; ++c) out[c] = denormalize_value(c, row[c]);
  return out;
}

std::pair<Segment, Segment> RollingBuffer::split_initial() const {
  if (!full()) {
    throw UsageError("split_initial: buffer holds " + std::to_string(rows_.size()) + " of " +
                     std::to_string(capacity_) + " rows");
  }
  const std::size_t n_train = capacity_ * 3 / 4;
  auto build = [this](std::size_t begin, std::size_t end) {
    Segment s;
    s.rows = Tensor2(end - begin, dims_);
    s.first_t = front_t() + begin;
    s.target_index = target_index_;
    for (std::size_t i = begin; i < end; ++i) {
      const auto norm = normalize(rows_[i]);
      std::copy(norm.begin(), norm.end(), s.rows.values().begin() + (i - begin) * dims_);
    }
    return s;
  };
  return {build(0, n_train), build(n_train, capacity_)};
}

Tensor2 RollingBuffer::latest_window(std::size_t w) const {
  if (w == 0 || w > rows_.size()) throw UsageError("latest_window: buffer shorter than window");
  Tensor2 x(w, dims_);
  const std::size_t start = rows_.size() - w;
  for (std::size_t i = 0; i < w; ++i) {
    const auto& r = rows_[start + i];
    for (std::size_t c = 0; c < dims_; ++c) x(i, c) = normalize_value(c, r[c]);
  }
  return x;
}

void RollingBuffer::overwrite_tail(const Tensor2& normalized) {
  if (normalized.cols() != dims_ || normalized.rows() > rows_.size()) {
    throw UsageError("overwrite_tail: shape mismatch");
  }
  const std::size_t start = rows_.size() - normalized.rows();
  for (std::size_t i = 0; i < normalized.rows(); ++i) {
    rows_[start + i] = denormalize(normalized.row(i));
  }
}

std::vector<WindowSample> make_windows(const Segment& segment, std::size_t w) {
  if (w == 0) throw ConfigError("window length must be >= 1");
  const std::size_t len = segment.length();
  if (len <= w) {
    throw EmptyDataError("segment of " + std::to_string(len) + " rows is too short for window " +
                         std::to_string(w));
  }
  const std::size_t d = segment.rows.cols();
  std::vector<WindowSample> out;
  out.reserve(len - w);
  const auto all = segment.rows.values();
  for (std::size_t end = w; end < len; ++end) {
    // window rows [end-w, end), target row `end`
    WindowSample s;
    s.x = Tensor2(w, d);
    std::copy(all.begin() + (end - w) * d, all.begin() + end * d, s.x.values().begin());
    s.y = segment.rows(end, segment.target_index);
    s.t = segment.first_t + end - 1;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace streamattack
