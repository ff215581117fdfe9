#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace streamattack {

/// Dense row-major matrix of doubles. Every entry is finite; the
/// constructors reject NaN and infinities.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols);  // zero-filled
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 column(std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Tensor2&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Max-norm of the elementwise difference. Shapes must match.
double linf_distance(const Tensor2& a, const Tensor2& b);

bool all_finite(std::span<const double> values);

}  // namespace streamattack
