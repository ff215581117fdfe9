#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "streamattack/error.hpp"
#include "streamattack/forecaster.hpp"
#include "support.hpp"

using namespace streamattack;
using streamattack::testing::random_model;
using streamattack::testing::random_tensor;
using streamattack::testing::rel_error;

namespace {

constexpr std::size_t kW = 12, kD = 2;

TrainConfig small_config(std::size_t epochs = 20) {
  TrainConfig c;
  c.architecture = streamattack::testing::small_shape(kW, kD);
  c.epochs = epochs;
  c.learning_rate = 3e-3;
  return c;
}

// Target column fixed at 0.5, covariate column random.
std::vector<WindowSample> constant_target(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor2 x = random_tensor(kW, kD, rng);
    for (std::size_t r = 0; r < kW; ++r) x(r, 0) = 0.5;
    out.push_back({x, 0.5, i});
  }
  return out;
}

// Windows holding a straight line; the target is the next point on it.
std::vector<WindowSample> ramps(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> start(0.0, 0.5), slope(0.0, 0.035);
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = start(rng), b = slope(rng);
    Tensor2 x(kW, kD);
    for (std::size_t r = 0; r < kW; ++r) {
      x(r, 0) = a + b * static_cast<double>(r);
      x(r, 1) = 0.5 * x(r, 0);
    }
    out.push_back({x, a + b * static_cast<double>(kW), i});
  }
  return out;
}

// Target = last value + Gaussian noise, so the quantile heads have
// something to learn.
std::vector<WindowSample> noisy(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.08);
  std::vector<WindowSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor2 x = random_tensor(kW, kD, rng, 0.2, 0.8);
    out.push_back({x, x(kW - 1, 0) + noise(rng), i});
  }
  return out;
}

}  // namespace

TEST_CASE("constant target is learned to within 0.02") {
  const auto train = constant_target(1500, 1);
  const ForecasterModel m = train_forecaster(train, small_config(40), 7);
  for (const auto& s : constant_target(200, 2)) CHECK(std::abs(m.predict(s.x).y_hat - 0.5) <= 0.02);
}

TEST_CASE("noiseless ramp is learned to held-out RMSE below 0.05") {
  const ForecasterModel m = train_forecaster(ramps(2000, 3), small_config(30), 5);
  double sq = 0.0;
  const auto test = ramps(500, 4);
  for (const auto& s : test) sq += std::pow(m.predict(s.x).y_hat - s.y, 2);
  CHECK(std::sqrt(sq / test.size()) < 0.05);
}

TEST_CASE("training is bitwise deterministic per seed") {
  const auto data = noisy(300, 9);
  const TrainConfig cfg = small_config(3);
  const ForecasterModel a = train_forecaster(data, cfg, 11);
  const ForecasterModel b = train_forecaster(data, cfg, 11);
  CHECK(a == b);
  CHECK(a.parameter_hash() == b.parameter_hash());
  CHECK_FALSE(a == train_forecaster(data, cfg, 12));
}

TEST_CASE("raw quantile coverage is within ten points of nominal before conformalization") {
  const auto data = noisy(3000, 13);
  const ForecasterModel m = train_forecaster(data, small_config(30), 3);
  std::size_t inside = 0;
  for (const auto& s : data) {
    const auto f = m.predict(s.x);
    CHECK(f.q_lo <= f.q_hi);
    if (s.y >= f.q_lo && s.y <= f.q_hi) ++inside;
  }
  const double coverage = static_cast<double>(inside) / data.size();
  CHECK(coverage >= 0.8);
  CHECK(coverage <= 1.0);
}

TEST_CASE("crossed quantile heads are swapped at emission") {
  const ConvNetShape shape = streamattack::testing::small_shape(kW, kD);
  ConvNetParams p = ConvNetParams::zeros(shape);
  p.head_bias = {0.1, 0.8, 0.2};
  TrainConfig cfg;
  cfg.architecture = shape;
  const ForecasterModel m(cfg, 0, {p});
  const auto f = m.predict(Tensor2(kW, kD));
  CHECK(f.q_lo == 0.2);
  CHECK(f.q_hi == 0.8);
  CHECK(m.lower_level() == doctest::Approx(0.05));
  CHECK(m.upper_level() == doctest::Approx(0.95));
}

TEST_CASE("predict is deterministic and checks shapes") {
  const ForecasterModel m = random_model(3, streamattack::testing::small_shape(kW, kD));
  std::mt19937_64 rng(1);
  const Tensor2 x = random_tensor(kW, kD, rng);
  const auto a = m.predict(x), b = m.predict(x);
  CHECK(a.y_hat == b.y_hat);
  CHECK(a.q_lo == b.q_lo);
  CHECK_THROWS_AS(m.predict(Tensor2(kW + 1, kD)), UsageError);
  CHECK_THROWS_AS(m.input_gradient(Tensor2(kW, kD + 1), 0.0), UsageError);
}

TEST_CASE("input gradient matches finite differences on 50 random models") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ForecasterModel m = random_model(seed + 100, streamattack::testing::small_shape(kW, kD));
    std::mt19937_64 rng(seed);
    const Tensor2 x = random_tensor(kW, kD, rng);
    const double y = std::uniform_real_distribution<double>(0, 1)(rng);
    const Tensor2 g = m.input_gradient(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
      Tensor2 up = x, down = x;
      up.values()[i] += 1e-5;
      down.values()[i] -= 1e-5;
      const double fd = (std::pow(m.predict(up).y_hat - y, 2) - std::pow(m.predict(down).y_hat - y, 2)) / 2e-5;
      CHECK(rel_error(g.values()[i], fd) < 1e-4);
    }
  }
}

TEST_CASE("input gradient vanishes at zero residual and is linear in the loss scale") {
  const ForecasterModel m = random_model(8, streamattack::testing::small_shape(kW, kD));
  std::mt19937_64 rng(2);
  const Tensor2 x = random_tensor(kW, kD, rng);
  const double y_hat = m.predict(x).y_hat;
  const Tensor2 g0 = m.input_gradient(x, y_hat);
  for (double v : g0.values()) CHECK(std::abs(v) < 1e-8);

  const Tensor2 g1 = m.input_gradient(x, 0.3);
  const Tensor2 g4 = m.input_gradient(x, 0.3, 4.0);
  const Tensor2 g3 = m.input_gradient(x, 0.3, 3.0);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(g4.values()[i] == 4.0 * g1.values()[i]);
    CHECK(g3.values()[i] == doctest::Approx(3.0 * g1.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("training errors: too few samples and divergence") {
  CHECK_THROWS_AS(train_forecaster(constant_target(50, 1), small_config(), 1), EmptyDataError);
  TrainConfig wild = small_config(5);
  wild.optimizer = OptimizerKind::Sgd;
  wild.learning_rate = 1e200;
  try {
    train_forecaster(noisy(200, 1), wild, 1);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 0);
    CHECK(e.epoch() < 5);
  }
  TrainConfig bad = small_config();
  bad.miscoverage = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("separate-trunk mode trains three single-output networks") {
  TrainConfig cfg = small_config(5);
  cfg.shared_trunk = false;
  const ForecasterModel m = train_forecaster(noisy(400, 2), cfg, 4);
  REQUIRE(m.networks().size() == 3);
  CHECK(m.networks()[0].shape.outputs == 1);
  const auto f = m.predict(noisy(1, 3)[0].x);
  CHECK(f.q_lo <= f.q_hi);
}

TEST_CASE("save and load round-trip and reject tampering") {
  const ForecasterModel m = train_forecaster(noisy(300, 5), small_config(2), 21);
  const auto stem = std::filesystem::temp_directory_path() / "streamattack_model_rt";
  save_model(m, stem);
  const ForecasterModel back = load_model(stem);
  CHECK(back == m);
  CHECK(back.parameter_hash() == m.parameter_hash());

  auto bin = stem;
  bin += ".bin";
  {
    std::fstream f(bin, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_model(stem), FormatError);
  CHECK_THROWS_AS(load_model(std::filesystem::temp_directory_path() / "streamattack_no_model"), IoError);
}
