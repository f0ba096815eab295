// SPDX-License-Identifier: MIT
// Independent brute-force and analytic verifiers.
//
// Everything here is deliberately redundant with the fast paths elsewhere in
// the library: exhaustive enumeration of the joint, closed-form outcome laws
// of each sampling scheme, exact filtered gradients, finite differences, a
// reward lower-bound check, and an exact generalized-EM reference. Tests pit
// the fast paths against these oracles; the oracles themselves use nothing
// but the policy's log_joint/grad definitions and direct summation.
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "femlab/policy.hpp"
#include "femlab/samplers.hpp"
#include "femlab/task.hpp"

namespace femlab {

struct Outcome {
  std::vector<int> z;
  int y = 0;
  double prob = 0.0;
};

struct EnumeratedJoint {
  std::vector<Outcome> outcomes;
  double total = 0.0;  // sums to 1 within 1e-9 for any finite parameters
};

// Number of (z, y) outcomes a shape admits (sum over admissible lengths of
// v^len, times v answers).
double outcome_count(const TaskShape& shape);

// Exhaustive list of all (z, y) with exp(log_joint). Refuses shapes with
// more than 1e6 outcomes (the refusal message carries the computed count).
EnumeratedJoint enumerate_joint(const PolicyParams& params,
                                const TaskShape& shape,
                                const std::vector<int>& x);

// Normalized restriction of the enumerated joint to y = y_star.
// Throws ContractViolation if the conditioning answer has zero marginal
// probability (impossible with finite logits).
std::vector<std::pair<std::vector<int>, double>> exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star);

// Closed-form outcome law of a sampling scheme: the exact probability that
// one call to draw_sample returns each (z, y). Laws (p = P(y = y* | x)):
//   exact       : (z, y*) with posterior probability
//   rs:M        : (z, y*) with joint(z,y*) * sum_{m=1..M} (1-p)^(m-1);
//                 misses (z, y != y*) with (1-p)^(M-1) * joint(z,y)
//   pps:eps     : (1-eps) * posterior + eps * joint
//   star:eps    : joint(z,y*) + (1-p) * pps-law  (misses scaled by (1-p))
// Every law sums to 1.
std::vector<Outcome> scheme_outcome_law(const PolicyParams& params_q,
                                        const SchemeSpec& scheme,
                                        const TaskShape& shape,
                                        const Datapoint& dp);

// Exact value of the reward-filtered expected gradient
//   E_q[ r(y, y*) * grad log pi(z, y | x; params_at) ],
// with q the outcome law of `scheme` at params_q. Flat layout.
std::vector<double> exact_filtered_grad(const PolicyParams& params_at,
                                        const SchemeSpec& scheme,
                                        const PolicyParams& params_q,
                                        const TaskShape& shape,
                                        const Datapoint& dp);

// Exact gradient of the posterior-weighted complete-data objective
//   E_{z ~ pi(.|x,y*;params)}[ grad log pi(z, y* | x; params) ],
// computed directly from the enumeration posterior. Independent derivation
// used to cross-check exact_filtered_grad with the exact-posterior scheme.
std::vector<double> exact_em_gradient(const PolicyParams& params,
                                      const TaskShape& shape,
                                      const Datapoint& dp);

// Reward lower-bound report. With q the outcome law of `scheme` at params_q:
//   rhs        = E_{pi(.|x;theta)}[r]            (expected reward)
//   lhs        = E_q[r * log pi(z, y | x;theta)] (filtered log-likelihood)
//   C          = E_q[r * (1 - log q(z, y))]      (>= 0: q <= 1 pointwise)
//   gap        = rhs - (lhs + C), >= 0 up to float error; 0 when q = pi.
struct RewardBoundReport {
  double lhs_plus_C = 0.0;
  double rhs = 0.0;
  double C = 0.0;
  double gap = 0.0;
  bool holds = false;
};

RewardBoundReport check_reward_lower_bound(const PolicyParams& theta,
                                      const SchemeSpec& scheme,
                                      const PolicyParams& params_q,
                                      const TaskShape& shape,
                                      const Datapoint& dp);

// One exact generalized-EM step: freeze the enumeration posterior of every
// datapoint at the input parameters, then run `inner_steps` full-batch
// gradient-ascent steps on the exact expected complete-data objective
//   J(theta) = sum_i E_{z ~ posterior_i}[ log pi(z, y_i* | x_i; theta) ].
// Returns J and the train marginal log-likelihood sum_i log P(y_i*|x_i)
// before and after. If j_after >= j_before then marginal_after >=
// marginal_before - 1e-10 (generalized-EM guarantee).
struct ExactEmResult {
  PolicyParams params;
  double j_before = 0.0;
  double j_after = 0.0;
  double marginal_before = 0.0;
  double marginal_after = 0.0;
};

ExactEmResult exact_em_step(const PolicyParams& params, const TaskShape& shape,
                            const std::vector<Datapoint>& data,
                            int inner_steps, double inner_lr);

// Central finite differences of log_joint, coordinate by coordinate.
std::vector<double> fd_gradient(const PolicyParams& params,
                                const TaskShape& shape,
                                const std::vector<int>& x,
                                const std::vector<int>& z, int y,
                                double h = 1e-5);

}  // namespace femlab
