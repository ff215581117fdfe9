#include "streamattack/layers.hpp"

#include <string>

#include "streamattack/error.hpp"

namespace streamattack {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw ConfigError("quantile level must lie in (0,1), got " + std::to_string(tau));
  }
}

}  // namespace

Tensor2 conv1d_forward(const Tensor2& input, std::span<const Tensor2> kernels,
                       std::span<const double> bias, std::size_t stride) {
  if (kernels.empty()) throw ConfigError("conv1d: no kernels");
  if (stride == 0) throw ConfigError("conv1d: stride must be >= 1");
  if (bias.size() != kernels.size()) throw ConfigError("conv1d: bias length != kernel count");
  const std::size_t kw = kernels[0].rows();
  const std::size_t d = input.cols();
  for (const auto& k : kernels) {
    if (k.rows() != kw || k.cols() != d) throw ConfigError("conv1d: kernel shape mismatch");
  }
  if (kw == 0 || kw > input.rows()) throw ConfigError("conv1d: kernel wider than input");

  const std::size_t out_len = (input.rows() - kw) / stride + 1;
  Tensor2 out(out_len, kernels.size());
  const double* x = input.values().data();
  for (std::size_t f = 0; f < kernels.size(); ++f) {
    const double* k = kernels[f].values().data();
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* window = x + t * stride * d;
      double acc = 0.0;
      for (std::size_t i = 0; i < kw * d; ++i) acc += window[i] * k[i];
      out(t, f) = acc + bias[f];
    }
  }
  return out;
}

LayerGrads conv1d_backward(const Tensor2& input, std::span<const Tensor2> kernels,
                           std::size_t stride, const Tensor2& d_output) {
  const std::size_t kw = kernels[0].rows();
  const std::size_t d = input.cols();
  const std::size_t out_len = d_output.rows();
  if (d_output.cols() != kernels.size() || out_len != (input.rows() - kw) / stride + 1) {
    throw UsageError("conv1d_backward: output gradient shape does not match forward");
  }
  LayerGrads g;
  g.d_input = Tensor2(input.rows(), d);
  g.d_params.reserve(kernels.size() + 1);
  Tensor2 d_bias(kernels.size(), 1);
  double* dx = g.d_input.values().data();
  const double* x = input.values().data();
  for (std::size_t f = 0; f < kernels.size(); ++f) {
    Tensor2 dk(kw, d);
    double* dkp = dk.values().data();
    const double* k = kernels[f].values().data();
    double db = 0.0;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double go = d_output(t, f);
      if (go == 0.0) continue;
      db += go;
      const std::size_t base = t * stride * d;
      for (std::size_t i = 0; i < kw * d; ++i) {
        dkp[i] += go * x[base + i];
        dx[base + i] += go * k[i];
      }
    }
    d_bias(f, 0) = db;
    g.d_params.push_back(std::move(dk));
  }
  g.d_params.push_back(std::move(d_bias));
  return g;
}

Tensor2 relu_forward(const Tensor2& input) {
  Tensor2 out(input.rows(), input.cols());
  auto in = input.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  return out;
}

Tensor2 relu_backward(const Tensor2& input, const Tensor2& d_output) {
  if (!input.same_shape(d_output)) throw UsageError("relu_backward: shape mismatch");
  Tensor2 out(input.rows(), input.cols());
  auto in = input.values();
  auto g = d_output.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? g[i] : 0.0;
  return out;
}

PoolResult maxpool1d_forward(const Tensor2& input, std::size_t pool) {
  if (pool == 0 || pool > input.rows()) throw ConfigError("maxpool1d: invalid pool size");
  const std::size_t out_rows = input.rows() / pool;
  PoolResult r{Tensor2(out_rows, input.cols()), std::vector<std::size_t>(out_rows * input.cols())};
  for (std::size_t o = 0; o < out_rows; ++o) {
    for (std::size_t c = 0; c < input.cols(); ++c) {
      std::size_t best = o * pool;
      double best_v = input(best, c);
      for (std::size_t i = 1; i < pool; ++i) {
        const double v = input(o * pool + i, c);
        if (v > best_v) {
          best_v = v;
          best = o * pool + i;
        }
      }
      r.output(o, c) = best_v;
      r.argmax_rows[o * input.cols() + c] = best;
    }
  }
  return r;
}

Tensor2 maxpool1d_backward(const PoolResult& forward, std::size_t input_rows,
                           const Tensor2& d_output) {
  if (!forward.output.same_shape(d_output)) throw UsageError("maxpool1d_backward: shape mismatch");
  const std::size_t cols = d_output.cols();
  Tensor2 d_input(input_rows, cols);
  for (std::size_t o = 0; o < d_output.rows(); ++o) {
    for (std::size_t c = 0; c < cols; ++c) {
      d_input(forward.argmax_rows[o * cols + c], c) += d_output(o, c);
    }
  }
  return d_input;
}

Tensor2 dense_forward(const Tensor2& x, const Tensor2& weights, std::span<const double> bias) {
  if (x.cols() != 1 || weights.cols() != x.rows() || bias.size() != weights.rows()) {
    throw ConfigError("dense: shape mismatch");
  }
  Tensor2 y(weights.rows(), 1);
  const double* xv = x.values().data();
  for (std::size_t o = 0; o < weights.rows(); ++o) {
    const double* w = weights.values().data() + o * weights.cols();
    double acc = bias[o];
    for (std::size_t i = 0; i < weights.cols(); ++i) acc += w[i] * xv[i];
    y(o, 0) = acc;
  }
  return y;
}

LayerGrads dense_backward(const Tensor2& x, const Tensor2& weights, const Tensor2& d_output) {
  if (d_output.rows() != weights.rows() || d_output.cols() != 1 || x.rows() != weights.cols()) {
    throw UsageError("dense_backward: shape mismatch");
  }
  LayerGrads g;
  g.d_input = Tensor2(x.rows(), 1);
  Tensor2 dw(weights.rows(), weights.cols());
  Tensor2 db(weights.rows(), 1);
  const double* xv = x.values().data();
  double* dx = g.d_input.values().data();
  for (std::size_t o = 0; o < weights.rows(); ++o) {
    const double go = d_output(o, 0);
    db(o, 0) = go;
    if (go == 0.0) continue;
    const double* w = weights.values().data() + o * weights.cols();
    double* dwr = dw.values().data() + o * weights.cols();
    for (std::size_t i = 0; i < weights.cols(); ++i) {
      dwr[i] = go * xv[i];
      dx[i] += go * w[i];
    }
  }
  g.d_params.push_back(std::move(dw));
  g.d_params.push_back(std::move(db));
  return g;
}

std::vector<double> dropout_mask(std::size_t n, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
  std::vector<double> mask(n, 1.0);
  if (rate == 0.0) return mask;
  std::bernoulli_distribution drop(rate);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = drop(rng) ? 0.0 : keep_scale;
  return mask;
}

Tensor2 dropout_apply(const Tensor2& input, std::span<const double> mask) {
  if (mask.empty()) return input;
  if (mask.size() != input.size()) throw UsageError("dropout: mask length mismatch");
  Tensor2 out(input.rows(), input.cols());
  auto in = input.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * mask[i];
  return out;
}

double squared_error(double prediction, double target) {
  const double r = prediction - target;
  return r * r;
}

double squared_error_grad(double prediction, double target) { return 2.0 * (prediction - target); }

double pinball_loss(double y, double q, double tau) {
  check_tau(tau);
  return y >= q ? tau * (y - q) : (1.0 - tau) * (q - y);
}

double pinball_grad(double y, double q, double tau) {
  check_tau(tau);
  return y >= q ? -tau : (1.0 - tau);
}

}  // namespace streamattack
