#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "streamattack/buffer.hpp"
#include "streamattack/error.hpp"
#include "streamattack/ingest.hpp"

using namespace streamattack;

namespace {

RollingBuffer filled(std::size_t capacity, std::size_t dims = 1) {
  RollingBuffer b(capacity, dims, 0);
  for (std::size_t i = 0; i < capacity; ++i) {
    std::vector<double> row(dims);
    for (std::size_t c = 0; c < dims; ++c) row[c] = static_cast<double>(i) + static_cast<double>(c);
    b.push(row);
  }
  return b;
}

}  // namespace

TEST_CASE("push is FIFO and evicts only when full") {
  RollingBuffer b(3, 1, 0);
  const double v[] = {1, 2, 3, 4};
  CHECK_FALSE(b.push(std::span(v, 1)).has_value());
  CHECK_FALSE(b.push(std::span(v + 1, 1)).has_value());
  CHECK_FALSE(b.push(std::span(v + 2, 1)).has_value());
  const auto evicted = b.push(std::span(v + 3, 1));
  REQUIRE(evicted.has_value());
  CHECK((*evicted)[0] == 1.0);
  REQUIRE(b.size() == 3);
  CHECK(b.contents()[0][0] == 2.0);
  CHECK(b.contents()[2][0] == 4.0);
  CHECK(b.front_t() == 1);
  CHECK(b.back_t() == 3);
}

TEST_CASE("dimension mismatch is a usage error") {
  RollingBuffer b(3, 2, 0);
  const double v[] = {1, 2, 3};
  CHECK_THROWS_AS(b.push(std::span(v, 3)), UsageError);
}

TEST_CASE("a million pushes at capacity 10^4 keep exactly the last 10^4 rows") {
  const std::size_t cap = 10000, n = 1000000;
  RollingBuffer b(cap, 1, 0);
  std::vector<double> all(n);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 100);
  for (std::size_t i = 0; i < n; ++i) {
    all[i] = u(rng);
    b.push(std::span(&all[i], 1));
    CHECK_MESSAGE(b.size() <= cap, "size exceeded capacity");
  }
  REQUIRE(b.size() == cap);
  bool same = true;
  for (std::size_t i = 0; i < cap; ++i) same = same && b.contents()[i][0] == all[n - cap + i];
  CHECK(same);
}

TEST_CASE("normalization examples") {
  RollingBuffer b(2, 2, 0);
  const double r1[] = {2.0, 5.0}, r2[] = {10.0, 5.0};
  CHECK_THROWS_AS(b.normalize(std::span(r1, 2)), UsageError);
  b.push(std::span(r1, 2));
  b.push(std::span(r2, 2));
  REQUIRE(b.normalization_frozen());
  CHECK(b.normalize_value(0, 6.0) == 0.5);
  CHECK(b.normalize_value(0, 2.0) == 0.0);
  CHECK(b.normalize_value(0, 10.0) == 1.0);
  CHECK(b.normalize_value(0, 12.0) == 1.25);  // unclipped
  CHECK(b.normalize_value(1, 7.0) == 0.0);    // constant feature
  CHECK(b.norm_max()[0] >= b.norm_min()[0]);
}

TEST_CASE("bounds stay frozen after the first fill") {
  RollingBuffer b = filled(10);
  const double lo = b.norm_min()[0], hi = b.norm_max()[0];
  const double big = 1000.0;
  b.push(std::span(&big, 1));
  CHECK(b.norm_min()[0] == lo);
  CHECK(b.norm_max()[0] == hi);
}

TEST_CASE("normalize then denormalize is the identity") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50, 50);
  RollingBuffer b(100, 3, 0);
  for (int i = 0; i < 100; ++i) {
    const double row[] = {u(rng), u(rng), u(rng)};
    b.push(std::span(row, 3));
  }
  for (int i = 0; i < 1000; ++i) {
    const double row[] = {u(rng), u(rng), u(rng)};
    const auto back = b.denormalize(b.normalize(std::span(row, 3)));
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back[c] - row[c]) < 1e-12);
  }
}

TEST_CASE("split sizes follow the floor rule") {
  for (auto [cap, train, calib] : {std::tuple<std::size_t, std::size_t, std::size_t>{100, 75, 25},
                                   {101, 75, 26},
                                   {4, 3, 1}}) {
    const auto [a, b] = filled(cap).split_initial();
    CHECK(a.length() == train);
    CHECK(b.length() == calib);
    CHECK(a.first_t + a.length() == b.first_t);  // ordered and exhaustive
  }
  RollingBuffer partial(10, 1, 0);
  const double v = 1.0;
  partial.push(std::span(&v, 1));
  CHECK_THROWS_AS(partial.split_initial(), UsageError);
}

TEST_CASE("window counts, targets and overlap") {
  RollingBuffer b = filled(40);
  const auto [train, calib] = b.split_initial();
  CHECK_THROWS_AS(make_windows(calib, 10), EmptyDataError);

  Segment seg{Tensor2(10, 1), 5, 0};
  for (std::size_t i = 0; i < 10; ++i) seg.rows(i, 0) = 0.1 * static_cast<double>(i);
  const auto w = make_windows(seg, 3);
  REQUIRE(w.size() == 7);
  CHECK(w.back().y == seg.rows(9, 0));
  CHECK(w.front().x(0, 0) == seg.rows(0, 0));
  CHECK(w.front().y == seg.rows(3, 0));
  CHECK(w.front().t == 5 + 2);
  for (std::size_t i = 1; i < w.size(); ++i) {
    for (std::size_t r = 0; r + 1 < 3; ++r) CHECK(w[i].x(r, 0) == w[i - 1].x(r + 1, 0));
  }
}

TEST_CASE("windows over in-range household data lie in the unit box") {
  const TimeSeriesFrame f = clean_frame(synth_household(2, 6000));
  RollingBuffer b(5000, f.dims(), f.target_index);
  for (std::size_t i = 0; i < 5000; ++i) b.push(f.row(i));
  const auto [train, calib] = b.split_initial();
  bool inside = true;
  for (const auto& s : make_windows(train, 60)) {
    for (double v : s.x.values()) inside = inside && v >= 0.0 && v <= 1.0;
    inside = inside && s.y >= 0.0 && s.y <= 1.0;
  }
  CHECK(inside);
}

TEST_CASE("latest window is the newest rows and overwrite_tail round-trips") {
  RollingBuffer b = filled(20, 2);
  const Tensor2 w = b.latest_window(4);
  REQUIRE(w.rows() == 4);
  CHECK(w(3, 0) == 1.0);
  CHECK(w(0, 0) == doctest::Approx(16.0 / 19.0));
  Tensor2 poisoned = w;
  poisoned(3, 0) = 0.5;
  b.overwrite_tail(poisoned);
  CHECK(b.contents().back()[0] == doctest::Approx(9.5));
  CHECK(b.latest_window(4)(3, 0) == doctest::Approx(0.5));
}
