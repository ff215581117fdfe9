#include "streamattack/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "streamattack/error.hpp"

namespace streamattack {

std::size_t nominal_rank(double level, std::size_t n) {
  if (n == 0) throw EmptyDataError("quantile of an empty set");
  // level * n that lands within rounding noise of an integer is that
  // integer; otherwise 0.9 * 30 style products would ceil one rank high.
  const double v = level * static_cast<double>(n);
  const double nearest = std::round(v);
  const double k = std::abs(v - nearest) <= 1e-9 * std::max(1.0, std::abs(v)) ? nearest : std::ceil(v);
  if (!(k >= 1.0)) return 1;
  if (k >= static_cast<double>(n)) return n;
  return static_cast<std::size_t>(k);
}

double nominal_rank_quantile(std::span<const double> values, double level) {
  const std::size_t k = nominal_rank(level, values.size());
  std::vector<double> scratch(values.begin(), values.end());
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(scratch.begin(), nth, scratch.end());
  return *nth;
}

}  // namespace streamattack
