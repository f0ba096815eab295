// SPDX-License-Identifier: MIT
// Deterministic random number generation with bit-portable mappings.
//
// std::mt19937_64 is fully specified by the C++ standard (both the generator
// and its single-value seeding procedure), so raw 64-bit draws are identical
// across platforms and standard libraries. The distribution adapters in
// <random> are NOT portable, so this header provides hand-rolled mappings:
// rejection sampling for bounded integers, a 53-bit mantissa scale for unit
// doubles, and a cumulative walk for discrete sampling. Every consumer of
// randomness in the library goes through this type, which is what makes
// training runs reproducible bit-for-bit from a single seed.
#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "femlab/errors.hpp"

namespace femlab {

// SplitMix64 finalizer: a fixed bijective mixer used to derive independent
// seed streams from (seed, salt...) tuples. Stable forever; changing it
// would silently re-randomize every seeded run.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Derives the seed of an independent stream from a base seed and three
// salts. Used as (seed, purpose-tag, iteration, index) so that concurrent
// sampling lanes own non-overlapping streams regardless of scheduling.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a,
                                   std::uint64_t b, std::uint64_t c) {
  std::uint64_t x = splitmix64(seed ^ (0x9E3779B97F4A7C15ULL * (a + 1)));
  x = splitmix64(x ^ (0xD1B54A32D192ED03ULL * (b + 1)));
  return splitmix64(x ^ (0x8CB92BA72F3D8DD7ULL * (c + 1)));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Raw 64-bit draw.
  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random mantissa bits.
  double next_unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n) by rejection (exactly uniform, bit-portable).
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw ContractViolation("next_below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return draw % n;
  }

  // Samples an index proportionally to non-negative weights via one uniform
  // draw and a cumulative walk. Falls back to the last strictly positive
  // weight if rounding pushes the draw past the final partial sum.
  std::size_t sample_discrete(std::span<const double> weights) {
    double total = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] < 0.0)
        throw ContractViolation("sample_discrete: negative weight");
      total += weights[i];
      if (weights[i] > 0.0) last_positive = i;
    }
    if (!(total > 0.0))
      throw ContractViolation("sample_discrete: all weights are zero");
    const double u = next_unit() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace femlab
