#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "streamattack/error.hpp"
#include "streamattack/layers.hpp"
#include "streamattack/network.hpp"
#include "support.hpp"

using namespace streamattack;
using streamattack::testing::random_tensor;
using streamattack::testing::rel_error;

namespace {

Tensor2 naive_conv(const Tensor2& x, const std::vector<Tensor2>& kernels, const std::vector<double>& bias,
                   std::size_t stride) {
  const std::size_t kw = kernels[0].rows();
  const std::size_t out_len = (x.rows() - kw) / stride + 1;
  Tensor2 out(out_len, kernels.size());
  for (std::size_t f = 0; f < kernels.size(); ++f) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double acc = 0.0;
      for (std::size_t i = 0; i < kw; ++i) {
        for (std::size_t c = 0; c < x.cols(); ++c) acc += x(t * stride + i, c) * kernels[f](i, c);
      }
      out(t, f) = acc + bias[f];
    }
  }
  return out;
}

// Central difference of a scalar function of one tensor entry.
template <class F>
double central_diff(Tensor2 x, std::size_t i, F&& f, double h = 1e-5) {
  const double x0 = x.values()[i];
  x.values()[i] = x0 + h;
  const double up = f(x);
  x.values()[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

double dot(const Tensor2& a, const Tensor2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

}  // namespace

TEST_CASE("tensor construction validates length and finiteness") {
  CHECK_THROWS_AS(Tensor2(2, 2, {1.0, 2.0, 3.0}), ConfigError);
  CHECK_THROWS_AS(Tensor2(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), ConfigError);
  CHECK_THROWS_AS(Tensor2(1, 1, {std::numeric_limits<double>::infinity()}), ConfigError);
  const Tensor2 z(2, 3);
  CHECK(z.size() == 6);
  CHECK(z(1, 2) == 0.0);
  CHECK(linf_distance(Tensor2(1, 2, {0.0, 1.0}), Tensor2(1, 2, {0.5, 0.75})) == doctest::Approx(0.5));
}

TEST_CASE("conv1d small examples") {
  const Tensor2 x(3, 1, {1, 2, 3});
  const std::vector<Tensor2> k1{Tensor2(2, 1, {1, 0})};
  const std::vector<double> b0{0.0};
  const Tensor2 y = conv1d_forward(x, k1, b0, 1);
  REQUIRE(y.rows() == 2);
  CHECK(y(0, 0) == 1.0);
  CHECK(y(1, 0) == 2.0);

  const Tensor2 ones(3, 1, {1, 1, 1});
  const std::vector<Tensor2> k2{Tensor2(2, 1, {1, 1})};
  const std::vector<double> b1{0.5};
  const Tensor2 z = conv1d_forward(ones, k2, b1, 1);
  CHECK(z(0, 0) == 2.5);
  CHECK(z(1, 0) == 2.5);
}

TEST_CASE("conv1d output length and shape errors") {
  std::mt19937_64 rng(3);
  const Tensor2 x = random_tensor(10, 2, rng);
  const std::vector<Tensor2> k{random_tensor(3, 2, rng)};
  const std::vector<double> b{0.0};
  CHECK(conv1d_forward(x, k, b, 1).rows() == 8);
  CHECK(conv1d_forward(x, k, b, 2).rows() == 4);
  CHECK(conv1d_forward(x, k, b, 3).rows() == 3);
  CHECK_THROWS_AS(conv1d_forward(x, k, b, 0), ConfigError);
  const std::vector<Tensor2> wide{random_tensor(11, 2, rng)};
  CHECK_THROWS_AS(conv1d_forward(x, wide, b, 1), ConfigError);
  const std::vector<Tensor2> wrong_d{random_tensor(3, 1, rng)};
  CHECK_THROWS_AS(conv1d_forward(x, wrong_d, b, 1), ConfigError);
}

TEST_CASE("conv1d equals the naive triple loop bit for bit") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> rows(1, 64), cols(1, 8), filters(1, 5), stride(1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t w = rows(rng), d = cols(rng);
    const std::size_t kw = std::uniform_int_distribution<std::size_t>(1, w)(rng);
    std::vector<Tensor2> kernels;
    std::vector<double> bias;
    for (std::size_t f = 0, n = filters(rng); f < n; ++f) {
      kernels.push_back(random_tensor(kw, d, rng, -1, 1));
      bias.push_back(std::uniform_real_distribution<double>(-1, 1)(rng));
    }
    const Tensor2 x = random_tensor(w, d, rng, -2, 2);
    const std::size_t s = stride(rng);
    CHECK(conv1d_forward(x, kernels, bias, s) == naive_conv(x, kernels, bias, s));
  }
}

TEST_CASE("conv1d backward matches finite differences for input and kernels") {
  std::mt19937_64 rng(5);
  const Tensor2 x = random_tensor(9, 3, rng, -1, 1);
  std::vector<Tensor2> kernels{random_tensor(4, 3, rng, -1, 1), random_tensor(4, 3, rng, -1, 1)};
  const std::vector<double> bias{0.1, -0.2};
  const Tensor2 weights = random_tensor(3, 2, rng, -1, 1);  // loss = sum(out * weights)
  auto loss_x = [&](const Tensor2& xi) { return dot(conv1d_forward(xi, kernels, bias, 2), weights); };
  const LayerGrads g = conv1d_backward(x, kernels, 2, weights);
  REQUIRE(g.d_params.size() == 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(rel_error(g.d_input.values()[i], central_diff(x, i, loss_x)) < 1e-6);
  }
  for (std::size_t f = 0; f < 2; ++f) {
    for (std::size_t i = 0; i < kernels[f].size(); ++i) {
      auto loss_k = [&](const Tensor2& kf) {
        auto ks = kernels;
        ks[f] = kf;
        return dot(conv1d_forward(x, ks, bias, 2), weights);
      };
      CHECK(rel_error(g.d_params[f].values()[i], central_diff(kernels[f], i, loss_k)) < 1e-6);
    }
  }
  CHECK(g.d_params[2].values()[0] == doctest::Approx(weights(0, 0) + weights(1, 0) + weights(2, 0)));
}

TEST_CASE("dense backward: y = Wx with loss y^2 at y = 3 gives 6 W^T") {
  const Tensor2 w(1, 3, {1.0, 2.0, -1.0});
  const Tensor2 x = Tensor2::column({1.0, 1.0, 0.0});
  const std::vector<double> b{0.0};
  const Tensor2 y = dense_forward(x, w, b);
  REQUIRE(y(0, 0) == 3.0);
  const LayerGrads g = dense_backward(x, w, Tensor2::column({2.0 * y(0, 0)}));
  CHECK(g.d_input(0, 0) == 6.0);
  CHECK(g.d_input(1, 0) == 12.0);
  CHECK(g.d_input(2, 0) == -6.0);
  CHECK(g.d_params[0](0, 1) == 6.0);  // dW = d_out x^T
  CHECK(g.d_params[1](0, 0) == 6.0);
}

TEST_CASE("relu forward and backward") {
  const Tensor2 x(1, 3, {-1.0, 0.0, 2.0});
  const Tensor2 y = relu_forward(x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 2) == 2.0);
  const Tensor2 g = relu_backward(x, Tensor2(1, 3, {5.0, 5.0, 5.0}));
  CHECK(g(0, 0) == 0.0);  // dead unit
  CHECK(g(0, 1) == 0.0);
  CHECK(g(0, 2) == 5.0);
}

TEST_CASE("maxpool routes gradient to the first argmax and conserves mass") {
  const Tensor2 x(4, 1, {3.0, 3.0, 1.0, 7.0});
  const PoolResult p = maxpool1d_forward(x, 2);
  REQUIRE(p.output.rows() == 2);
  CHECK(p.output(0, 0) == 3.0);
  CHECK(p.argmax_rows[0] == 0);  // tie goes to the first index
  CHECK(p.argmax_rows[1] == 3);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor2 in = random_tensor(17, 3, rng, -1, 1);
    const PoolResult fw = maxpool1d_forward(in, 3);
    const Tensor2 d_out = random_tensor(fw.output.rows(), 3, rng, -1, 1);
    const Tensor2 d_in = maxpool1d_backward(fw, in.rows(), d_out);
    double in_mass = 0.0, out_mass = 0.0;
    for (double v : d_in.values()) in_mass += v;
    for (double v : d_out.values()) out_mass += v;
    CHECK(in_mass == doctest::Approx(out_mass).epsilon(1e-12));
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t r = 0; r < in.rows(); ++r) {
        const bool winner = r / 3 < fw.output.rows() && fw.argmax_rows[(r / 3) * 3 + c] == r;
        if (!winner) CHECK(d_in(r, c) == 0.0);
      }
    }
  }
}

TEST_CASE("dropout is inverted and identity without a mask") {
  std::mt19937_64 rng(1);
  const auto mask = dropout_mask(100000, 0.2, rng);
  double mean = 0.0;
  std::size_t zeros = 0;
  for (double m : mask) {
    mean += m;
    if (m == 0.0) ++zeros;
    else CHECK(m == doctest::Approx(1.25));
  }
  CHECK(mean / mask.size() == doctest::Approx(1.0).epsilon(0.01));
  CHECK(static_cast<double>(zeros) / mask.size() == doctest::Approx(0.2).epsilon(0.05));
  const Tensor2 x(1, 2, {0.3, 0.4});
  CHECK(dropout_apply(x, {}) == x);
}

TEST_CASE("pinball loss examples") {
  CHECK(pinball_loss(1.0, 0.0, 0.9) == doctest::Approx(0.9));
  CHECK(pinball_loss(0.0, 1.0, 0.9) == doctest::Approx(0.1));
  CHECK(pinball_loss(0.37, 0.37, 0.9) == 0.0);
  CHECK_THROWS_AS(pinball_loss(0.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(pinball_loss(0.0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(pinball_grad(0.0, 0.0, 1.5), ConfigError);
}

TEST_CASE("pinball loss is convex in q and nonnegative") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-3, 3), tau(0.01, 0.99);
  for (int i = 0; i < 10000; ++i) {
    const double y = u(rng), t = tau(rng), q1 = u(rng), q2 = u(rng);
    const double mid = pinball_loss(y, 0.5 * (q1 + q2), t);
    CHECK(mid <= 0.5 * (pinball_loss(y, q1, t) + pinball_loss(y, q2, t)) + 1e-12);
    CHECK(pinball_loss(y, q1, t) >= 0.0);
  }
}

TEST_CASE("pinball and squared-error gradients match finite differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 200; ++i) {
    const double y = u(rng), q = u(rng), t = 0.3;
    if (std::abs(y - q) < 1e-3) continue;
    const double fd = (pinball_loss(y, q + 1e-6, t) - pinball_loss(y, q - 1e-6, t)) / 2e-6;
    CHECK(pinball_grad(y, q, t) == doctest::Approx(fd).epsilon(1e-6));
    const double fd2 = (squared_error(q + 1e-6, y) - squared_error(q - 1e-6, y)) / 2e-6;
    CHECK(squared_error_grad(q, y) == doctest::Approx(fd2).epsilon(1e-6));
  }
}

TEST_CASE("full network input gradient matches central differences on 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const ConvNetShape shape = streamattack::testing::small_shape(10, 2);
    const ConvNetParams p = ConvNetParams::he_uniform(shape, rng);
    const Tensor2 x = random_tensor(shape.window, shape.features, rng);
    const std::vector<double> head_weights{1.0, -0.5, 0.25};
    auto loss = [&](const Tensor2& xi) {
      const auto o = network_predict(p, xi);
      return head_weights[0] * o[0] + head_weights[1] * o[1] + head_weights[2] * o[2];
    };
    const ForwardTape tape = network_forward(p, x);
    const NetworkGrads g = network_backward(p, tape, head_weights);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(rel_error(g.d_input.values()[i], central_diff(x, i, loss)) < 1e-4);
    }
  }
}

TEST_CASE("full network parameter gradients match central differences") {
  std::mt19937_64 rng(77);
  const ConvNetShape shape = streamattack::testing::small_shape(10, 2);
  ConvNetParams p = ConvNetParams::he_uniform(shape, rng);
  const Tensor2 x = random_tensor(shape.window, shape.features, rng);
  const std::vector<double> d_out{0.7, 0.2, -0.4};
  const NetworkGrads g = network_backward(p, network_forward(p, x), d_out);
  auto blocks = p.blocks();
  const auto grads = g.d_params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      const double v0 = blocks[b][i];
      auto eval = [&] {
        const auto o = network_predict(p, x);
        return d_out[0] * o[0] + d_out[1] * o[1] + d_out[2] * o[2];
      };
      blocks[b][i] = v0 + 1e-5;
      const double up = eval();
      blocks[b][i] = v0 - 1e-5;
      const double down = eval();
      blocks[b][i] = v0;
      CHECK(rel_error(grads[b][i], (up - down) / 2e-5) < 1e-4);
    }
  }
}

TEST_CASE("backward refuses a tape from another network") {
  std::mt19937_64 rng(4);
  const ConvNetShape shape = streamattack::testing::small_shape();
  const ConvNetParams a = ConvNetParams::he_uniform(shape, rng);
  const ConvNetParams b = ConvNetParams::he_uniform(shape, rng);
  const ForwardTape tape = network_forward(a, random_tensor(shape.window, shape.features, rng));
  const std::vector<double> d{1.0, 0.0, 0.0};
  CHECK_THROWS_AS(network_backward(b, tape, d), UsageError);
  CHECK_THROWS_AS(network_backward(a, ForwardTape{}, d), UsageError);
}

TEST_CASE("network forward without rng is deterministic; with dropout it is seeded") {
  std::mt19937_64 rng(8);
  const ConvNetShape shape = streamattack::testing::small_shape();
  const ConvNetParams p = ConvNetParams::he_uniform(shape, rng);
  const Tensor2 x = random_tensor(shape.window, shape.features, rng);
  CHECK(network_predict(p, x) == network_predict(p, x));
  std::mt19937_64 r1(1), r2(1);
  CHECK(network_forward(p, x, 0.5, &r1).outputs == network_forward(p, x, 0.5, &r2).outputs);
  CHECK(p.parameter_count() == 4 * 3 * 3 + 4 + 6 * 20 + 6 + 3 * 6 + 3);
}
