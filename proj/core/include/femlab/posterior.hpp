// SPDX-License-Identifier: MIT
// Exact posterior over rationales given the true answer, via backward
// messages and tilted forward sampling.
//
// The chain structure of the policy makes the posterior
// pi(z | x, y*; theta) exactly tractable: a backward pass computes
// beta(t, c) = log P(final answer = y* | length-t prefix ending in c), and a
// forward pass that tilts each step distribution by the downstream message
// samples rationales whose law is exactly the posterior.
#pragma once

#include <utility>
#include <vector>

#include "femlab/policy.hpp"
#include "femlab/rng.hpp"
#include "femlab/task.hpp"

namespace femlab {

// Backward messages in log space. Indexed (t, last) with t in {0..L_max};
// the BOS column is meaningful only at t = 0. Entries at unreachable
// (t, BOS) positions are -inf and never read.
struct PosteriorMessages {
  int vocab = 0;
  int max_len = 0;
  std::vector<double> beta;  // (L_max+1) x (v+1), row-major [t][last]

  double at(int t, int last) const {
    return beta[static_cast<std::size_t>(t) * (vocab + 1) + last];
  }
  // log P(y = y* | x; theta), the marginal likelihood of the conditioning
  // answer.
  double log_marginal() const { return at(0, vocab); }
};

// Backward recursion. beta(L_max, c) = log p(y*|c); for 1 <= t < L_max,
// beta(t, c) = logsumexp over the STOP branch (stop at t+1, then answer)
// and every continuation c' (step to c', then beta(t+1, c')); beta(0, BOS)
// has no stop branch because STOP is masked at t = 1.
PosteriorMessages compute_messages(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x, int y_star);

// Tilted forward sample: at each step the unnormalized log-weight of a
// continuation is its step log-probability plus the downstream message, and
// (where STOP is unmasked) the stop weight is the stop log-probability plus
// the answer log-probability. Returns (z, y*); the induced law over z is
// exactly the posterior.
std::pair<std::vector<int>, int> sample_exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star, const PosteriorMessages& messages,
    Rng& rng);

// Convenience overload that computes the messages internally.
std::pair<std::vector<int>, int> sample_exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star, Rng& rng);

// Analytic log-probability that the tilted forward sampler emits exactly
// rationale z. Equals log_joint(x, z, y*) - log_marginal up to floating
// error; exposed so tests can verify that identity path by path.
double posterior_log_prob(const PolicyParams& params, const TaskShape& shape,
                          const std::vector<int>& x, int y_star,
                          const PosteriorMessages& messages,
                          const std::vector<int>& z);

}  // namespace femlab
