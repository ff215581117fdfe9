#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "streamattack/tensor.hpp"

namespace streamattack {

/// One sliding-window sample: x is [w x d] in normalized units, y is the
/// normalized target of the step after the window, t is the stream index
/// of the window's last row.
struct WindowSample {
  Tensor2 x;
  double y = 0.0;
  std::size_t t = 0;
};

/// A contiguous, normalized slice of the buffer.
struct Segment {
  Tensor2 rows;  // [length x d]
  std::size_t first_t = 0;
  std::size_t target_index = 0;

  std::size_t length() const { return rows.rows(); }
};

/// Fixed-capacity FIFO of raw feature rows. Min/max normalization bounds
/// are frozen the first time the buffer fills and never change afterwards.
class RollingBuffer {
 public:
  RollingBuffer(std::size_t capacity, std::size_t dims, std::size_t target_index);

  /// Appends a row; returns the evicted oldest row when the buffer was full.
  std::optional<std::vector<double>> push(std::span<const double> row);

  std::size_t capacity() const { return capacity_; }
  std::size_t dims() const { return dims_; }
  std::size_t size() const { return rows_.size(); }
  bool full() const { return rows_.size() == capacity_; }
  std::size_t target_index() const { return target_index_; }
  /// Stream index of the oldest and newest stored rows.
  std::size_t front_t() const { return pushed_ - rows_.size(); }
  std::size_t back_t() const { return pushed_ - 1; }
  std::size_t pushed() const { return pushed_; }

  const std::deque<std::vector<double>>& contents() const { return rows_; }

  bool normalization_frozen() const { return frozen_; }
  std::span<const double> norm_min() const { return norm_min_; }
  std::span<const double> norm_max() const { return norm_max_; }

  /// (v - min) / (max - min) per feature, unclipped; constant features map to 0.
  std::vector<double> normalize(std::span<const double> row) const;
  std::vector<double> denormalize(std::span<const double> row) const;
  double normalize_value(std::size_t feature, double v) const;
  double denormalize_value(std::size_t feature, double v) const;

  /// First floor(75%) of the current contents for training, the rest for
  /// calibration. Requires a full buffer.
  std::pair<Segment, Segment> split_initial() const;

  /// The newest w rows, normalized, as [w x d].
  Tensor2 latest_window(std::size_t w) const;

  /// Replaces the newest rows with the denormalized form of `normalized`
  /// ([k x d], k <= size()). Used only by the persistent-poisoning mode.
  void overwrite_tail(const Tensor2& normalized);

 private:
  void require_frozen() const;

  std::size_t capacity_;
  std::size_t dims_;
  std::size_t target_index_;
  std::size_t pushed_ = 0;
  std::deque<std::vector<double>> rows_;
  bool frozen_ = false;
  std::vector<double> norm_min_;
  std::vector<double> norm_max_;
};

/// One sample per position: x = rows i-w+1..i, y = target at i+1.
/// Yields length - w samples; throws EmptyDataError when length <= w.
std::vector<WindowSample> make_windows(const Segment& segment, std::size_t w);

}  // namespace streamattack
