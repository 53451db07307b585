#include <doctest.h>

#include <cmath>
#include <vector>

#include "evtrack/rng.hpp"

using evtrack::Rng;

TEST_CASE("same seed and stream give the same sequence") {
  Rng a(7, 3), b(7, 3), c(7, 4);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
}

TEST_CASE("bounded integers stay in range and cover it") {
  Rng r(1);
  std::vector<int> hits(10, 0);
  for (int i = 0; i < 100000; ++i) {
    const auto v = r.below(10);
    REQUIRE(v < 10);
    ++hits[v];
  }
  for (int h : hits) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("normal moments") {
  Rng r(9);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal(1.0, 2.0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(mean == doctest::Approx(1.0).epsilon(0.02));
  CHECK(var == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("uniform is in [0, 1)") {
  Rng r(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}
