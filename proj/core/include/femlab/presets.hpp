// SPDX-License-Identifier: MIT
// Canonical parameter constructions for the modular prefix-sum task.
#pragma once

#include "femlab/policy.hpp"
#include "femlab/task.hpp"

namespace femlab {

// Base-policy logit constants. Calibrated once for the default task shape
// and frozen: the transition table leans toward the running prefix sum, the
// answer head reads the last state off near-deterministically, and STOP
// logits stay neutral so where to stop is the structure left to learn.
inline constexpr double kBaseTransitionLogit = 3.7;
inline constexpr double kBaseAnswerLogit = 4.0;

// Optimal policy for its natural task (shapes with max_len == question_len):
// transition row (prev=a, feat=b) puts `scale` logits on (a+b) mod v with
// BOS acting as state 0, and the answer head is the identity read-off. Its
// greedy decode tracks prefix sums exactly and scores accuracy 1.0 when the
// rationale budget equals the question length. With a longer budget the
// decode overruns (no stop behaviour is representable in this family) and
// accuracy falls back to chance.
PolicyParams make_optimal_params(const TaskShape& shape, double scale = 30.0);

// Partially-structured starting point for training ("the base policy").
// All-zero tables are an exactly symmetric saddle of reward-filtered
// training on this task (the answer is independent of any strict subset of
// chain tokens under the uniform policy), so training must start from a
// policy that already roughly tracks prefix sums but does not know where to
// stop. Greedy accuracy at the default shape is approximately 1/v.
PolicyParams make_base_policy(const TaskShape& shape);

// Adversarial construction whose rollouts essentially never collect reward:
// the answer head puts `scale` logits on (last+1) mod v, i.e. always one off
// the identity read-off. Useful for exercising the reward-0 filtering path
// end to end.
PolicyParams make_never_correct_params(const TaskShape& shape,
                                       double scale = 40.0);

}  // namespace femlab
