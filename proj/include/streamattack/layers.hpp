#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "streamattack/tensor.hpp"

namespace streamattack {

/// Gradients of one layer: with respect to its input (same shape as the
/// input) and to each of its parameter tensors (same order as forward).
struct LayerGrads {
  Tensor2 d_input;
  std::vector<Tensor2> d_params;
};

// Conv1d over time. Input is [w x d]; each kernel is [kernel_width x d].
// Output is [out_len x n_kernels] with out_len = (w - kernel_width) / stride + 1.
// Cross-correlation, valid padding.
Tensor2 conv1d_forward(const Tensor2& input, std::span<const Tensor2> kernels,
                       std::span<const double> bias, std::size_t stride);

/// d_params holds one tensor per kernel followed by the bias as a column.
LayerGrads conv1d_backward(const Tensor2& input, std::span<const Tensor2> kernels,
                           std::size_t stride, const Tensor2& d_output);

Tensor2 relu_forward(const Tensor2& input);
Tensor2 relu_backward(const Tensor2& input, const Tensor2& d_output);

struct PoolResult {
  Tensor2 output;
  /// For each output cell, the input row that won (first index on ties).
  std::vector<std::size_t> argmax_rows;
};

/// Non-overlapping max-pool over the row (time) axis, per column.
PoolResult maxpool1d_forward(const Tensor2& input, std::size_t pool);
Tensor2 maxpool1d_backward(const PoolResult& forward, std::size_t input_rows,
                           const Tensor2& d_output);

/// y = W x + b, with x a column [in x 1], W [out x in], b of length out.
Tensor2 dense_forward(const Tensor2& x, const Tensor2& weights, std::span<const double> bias);
/// d_params = {dW [out x in], db [out x 1]}.
LayerGrads dense_backward(const Tensor2& x, const Tensor2& weights, const Tensor2& d_output);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1-rate). An empty mask means dropout is inactive (identity).
std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng);
Tensor2 dropout_apply(const Tensor2& input, std::span<const double> mask);

double squared_error(double prediction, double target);
double squared_error_grad(double prediction, double target);

/// Quantile (pinball) loss for level tau in (0, 1).
double pinball_loss(double y, double q, double tau);
/// Subgradient of pinball_loss with respect to q; at y == q the
/// y >= q branch is taken.
double pinball_grad(double y, double q, double tau);

}  // namespace streamattack
