// SPDX-License-Identifier: MIT
// Rationale proposal schemes: how training data is drawn given (x, y*).
//
//   rs:<M>     rejection sampling — up to M policy rollouts, accept the
//              first whose answer matches y* (reward 1); after M misses the
//              M-th sample is returned with reward 0.
//   pps:<eps>  posterior sampling with fidelity 1-eps — with probability
//              1-eps an exact posterior sample (reward 1 by construction),
//              with probability eps one raw rollout (reward by comparison).
//   star:<eps> one rollout first; on a miss, fall through to pps:<eps>.
//   exact      exact posterior sampling (pps:0).
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "femlab/policy.hpp"
#include "femlab/posterior.hpp"
#include "femlab/rng.hpp"
#include "femlab/task.hpp"

namespace femlab {

struct SchemeSpec {
  enum class Kind { kRejection, kStar, kPosteriorMix, kExactPosterior };

  Kind kind = Kind::kRejection;
  int budget = 1;        // M, used by kRejection
  double epsilon = 0.0;  // used by kStar and kPosteriorMix

  static SchemeSpec rs(int budget);
  static SchemeSpec star(double epsilon);
  static SchemeSpec pps(double epsilon);
  static SchemeSpec exact_posterior();

  void validate() const;

  // Stable textual tag, e.g. "rs:3", "pps:0.1", "star:0.25", "exact".
  std::string to_string() const;
  // Parses the textual tag; returns std::nullopt on malformed input.
  static std::optional<SchemeSpec> parse(const std::string& text);
};

// One proposed training sample for one datapoint.
struct SampleRecord {
  std::vector<int> z_hat;
  int y_hat = 0;
  int reward = 0;
  SchemeSpec scheme;
  int attempts_used = 1;  // proposal draws consumed (a posterior draw is 1)
  std::size_t datapoint_index = 0;
};

SampleRecord sample_rs(const PolicyParams& params, const TaskShape& shape,
                       const Datapoint& dp, int budget, Rng& rng,
                       std::size_t datapoint_index = 0);

SampleRecord sample_pps(const PolicyParams& params, const TaskShape& shape,
                        const Datapoint& dp, double epsilon, Rng& rng,
                        std::size_t datapoint_index = 0);

SampleRecord sample_star(const PolicyParams& params, const TaskShape& shape,
                         const Datapoint& dp, double epsilon, Rng& rng,
                         std::size_t datapoint_index = 0);

SampleRecord sample_exact_record(const PolicyParams& params,
                                 const TaskShape& shape, const Datapoint& dp,
                                 Rng& rng, std::size_t datapoint_index = 0);

// Dispatch on the scheme tag.
SampleRecord draw_sample(const PolicyParams& params, const TaskShape& shape,
                         const Datapoint& dp, const SchemeSpec& scheme,
                         Rng& rng, std::size_t datapoint_index = 0);

}  // namespace femlab
