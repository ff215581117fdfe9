#include "streamattack/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "streamattack/error.hpp"

namespace streamattack {

Tensor2::Tensor2(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + std::to_string(rows_) + "x" +
                      std::to_string(cols_));
  }
  if (!all_finite(data_)) {
    throw ConfigError("tensor contains non-finite values");
  }
}

Tensor2 Tensor2::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor2(n, 1, std::move(values));
}

double linf_distance(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) {
    throw UsageError("linf_distance: shape mismatch");
  }
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    m = std::max(m, std::abs(av[i] - bv[i]));
  }
  return m;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace streamattack
