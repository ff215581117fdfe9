#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "streamattack/forecaster.hpp"
#include "streamattack/network.hpp"
#include "streamattack/tensor.hpp"

namespace streamattack::testing {

inline ConvNetShape small_shape(std::size_t window = 12, std::size_t features = 3, std::size_t outputs = 3) {
  ConvNetShape s;
  s.window = window;
  s.features = features;
  s.filters = 4;
  s.kernel_width = 3;
  s.pool = 2;
  s.hidden = 6;
  s.outputs = outputs;
  return s;
}

inline Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = 0.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = u(rng);
  return Tensor2(rows, cols, std::move(v));
}

// Untrained shared-trunk model with random He weights and small random biases.
inline ForecasterModel random_model(std::uint64_t seed, const ConvNetShape& shape = small_shape()) {
  std::mt19937_64 rng(seed);
  ConvNetParams p = ConvNetParams::he_uniform(shape, rng);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& b : p.conv_bias) b = u(rng);
  for (auto& b : p.hidden_bias) b = u(rng);
  for (auto& b : p.head_bias) b = u(rng);
  TrainConfig cfg;
  cfg.architecture = shape;
  return ForecasterModel(cfg, seed, {p});
}

// Relative error with a floor so coordinates that are numerically zero
// compare on an absolute scale.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace streamattack::testing
