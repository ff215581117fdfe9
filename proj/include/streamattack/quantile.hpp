#pragma once

#include <cstddef>
#include <span>

namespace streamattack {

/// Rank used by the nominal-rank empirical quantile: ceil(level * n),
/// clamped to [1, n]. Levels above 1 select the maximum.
std::size_t nominal_rank(double level, std::size_t n);

/// k-th smallest value (1-based) with k = nominal_rank(level, n). No
/// interpolation. `values` must be non-empty.
double nominal_rank_quantile(std::span<const double> values, double level);

}  // namespace streamattack
