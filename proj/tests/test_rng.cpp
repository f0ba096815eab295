// SPDX-License-Identifier: MIT
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "femlab/errors.hpp"
#include "femlab/rng.hpp"

using namespace femlab;

TEST_CASE("splitmix64 is deterministic and seed-sensitive") {
  CHECK(splitmix64(0) == splitmix64(0));
  CHECK(splitmix64(0) != splitmix64(1));
  CHECK(splitmix64(12345) == splitmix64(12345));
}

TEST_CASE("derive_stream separates coordinates") {
  const std::uint64_t base = derive_stream(7, 1, 2, 3);
  CHECK(base == derive_stream(7, 1, 2, 3));
  CHECK(base != derive_stream(7, 1, 2, 4));
  CHECK(base != derive_stream(7, 1, 3, 2));
  CHECK(base != derive_stream(7, 2, 1, 3));
  CHECK(base != derive_stream(8, 1, 2, 3));
  // Swapping coordinate roles must not collide.
  CHECK(derive_stream(7, 1, 2, 0) != derive_stream(7, 2, 1, 0));
}

TEST_CASE("Rng reproduces the same sequence from the same seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("next_unit lands in [0, 1) with 53-bit resolution") {
  Rng rng(1);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("next_below is bounded and unbiased enough") {
  Rng rng(2);
  std::vector<int> counts(5, 0);
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) {
    const std::uint64_t v = rng.next_below(5);
    REQUIRE(v < 5);
    ++counts[static_cast<int>(v)];
  }
  // 5 sigma around the uniform expectation.
  const double expect = draws / 5.0;
  const double sigma = std::sqrt(draws * 0.2 * 0.8);
  for (int c : counts) CHECK(std::abs(c - expect) < 5.0 * sigma);
  CHECK(rng.next_below(1) == 0);
}

TEST_CASE("sample_discrete respects supports and rejects bad weights") {
  Rng rng(3);
  SUBCASE("point masses") {
    const std::vector<double> w0{1.0, 0.0, 0.0};
    const std::vector<double> w2{0.0, 0.0, 2.5};
    for (int i = 0; i < 50; ++i) {
      CHECK(rng.sample_discrete(w0) == 0);
      CHECK(rng.sample_discrete(w2) == 2);
    }
  }
  SUBCASE("frequencies follow the weights") {
    const std::vector<double> w{1.0, 3.0};
    int ones = 0;
    const int draws = 40000;
    for (int i = 0; i < draws; ++i) ones += rng.sample_discrete(w) == 1;
    const double se = std::sqrt(draws * 0.75 * 0.25);
    CHECK(std::abs(ones - 0.75 * draws) < 5.0 * se);
  }
  SUBCASE("invalid weights throw") {
    CHECK_THROWS_AS((void)rng.sample_discrete(std::vector<double>{1.0, -0.5}),
                    ContractViolation);
    CHECK_THROWS_AS((void)rng.sample_discrete(std::vector<double>{0.0, 0.0}),
                    ContractViolation);
    CHECK_THROWS_AS((void)rng.sample_discrete(std::vector<double>{}),
                    ContractViolation);
  }
}
