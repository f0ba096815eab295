// SPDX-License-Identifier: MIT
// The tabular autoregressive policy over (rationale, answer) pairs.
//
// Factorization: starting from a BOS state, the policy emits rationale
// tokens one at a time. The logit row used at step t (1-based) is selected
// by the previous rationale token (or BOS) and the cyclically-indexed
// question token x[(t-1) mod n]; each row scores the v next-token choices
// plus an explicit STOP action. The answer is then drawn from a second
// table conditioned on the last rationale token only.
//
// Masking rules that keep the joint distribution normalized:
//   * STOP is masked at t = 1, so rationales are never empty.
//   * With variable_length = false, STOP is masked at every t <= L_max, so
//     all rationales have length exactly L_max.
//   * At t = L_max + 1 the step distribution is a point mass on STOP that
//     contributes zero to both the log-likelihood and the gradient.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "femlab/rng.hpp"
#include "femlab/task.hpp"

namespace femlab {

// Logit tables of the policy. Transition table: (v+1) x v x (v+1) indexed
// [prev][question-feature][next] with prev ranging over {0..v-1, BOS} and
// next over {0..v-1, STOP}. Answer table: v x v indexed [last][answer].
// Serializable as one flat array: transition row-major, then answer.
struct PolicyParams {
  int vocab = 0;
  std::vector<double> transition;  // (v+1) * v * (v+1)
  std::vector<double> answer;      // v * v

  static PolicyParams zeros(int vocab);

  int bos() const { return vocab; }
  int stop() const { return vocab; }

  std::size_t transition_index(int prev, int feature, int next) const {
    return (static_cast<std::size_t>(prev) * vocab + feature) * (vocab + 1) +
           next;
  }
  std::size_t answer_index(int last, int y) const {
    return static_cast<std::size_t>(last) * vocab + y;
  }

  std::size_t param_count() const {
    return transition.size() + answer.size();
  }
  // Offset of the answer block inside the flat layout.
  std::size_t answer_offset() const { return transition.size(); }

  std::vector<double> flatten() const;
  static PolicyParams from_flat(int vocab, const std::vector<double>& flat);

  void validate(const TaskShape& shape) const;
};

// Probability vector over {0..v-1, STOP} for step t (1-based, t <= L_max+1),
// after masking. Entries sum to 1 within 1e-12.
std::vector<double> step_distribution(const PolicyParams& params,
                                      const TaskShape& shape,
                                      const std::vector<int>& x, int prev,
                                      int t);

// Log-space variant: masked entries are -infinity.
std::vector<double> step_log_probs(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x, int prev, int t);

// Probability vector over answers {0..v-1} given the last rationale token.
std::vector<double> answer_distribution(const PolicyParams& params, int last);

// Log-space variant of answer_distribution.
std::vector<double> answer_log_probs(const PolicyParams& params, int last);

// log pi(z, y | x): sum of masked-softmax step log-probabilities (including
// the explicit STOP draw when the rationale ends before L_max), plus the
// answer log-probability. Forced stops at L_max contribute nothing.
double log_joint(const PolicyParams& params, const TaskShape& shape,
                 const std::vector<int>& x, const std::vector<int>& z, int y);

// Gradient of log_joint with respect to every logit, in flat layout. For
// each softmax draw actually taken the used row receives
// onehot(chosen) - softmax(masked logits); masked entries and untouched
// rows are exactly zero. Rows revisited along the rationale accumulate.
std::vector<double> grad_log_joint(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x,
                                   const std::vector<int>& z, int y);

// Ancestral sample of (z, y) from the policy.
std::pair<std::vector<int>, int> sample_rollout(const PolicyParams& params,
                                                const TaskShape& shape,
                                                const std::vector<int>& x,
                                                Rng& rng);

// Deterministic decode: stepwise argmax of the masked step distribution,
// ties broken toward the smallest token id (STOP loses all ties), then
// argmax answer.
std::pair<std::vector<int>, int> greedy_decode(const PolicyParams& params,
                                               const TaskShape& shape,
                                               const std::vector<int>& x);

// --- Checkpoint file format ----------------------------------------------
//
//   femlab-policy v=<v> n=<n> Lmax=<L_max> varlen=<0|1>
//   <one parameter per line, shortest round-trip decimal>
//
// Values are emitted with std::to_chars and parsed with std::from_chars, so
// the round-trip is bit-exact.
struct Checkpoint {
  PolicyParams params;
  TaskShape shape;
};

void write_checkpoint(const std::string& path, const PolicyParams& params,
                      const TaskShape& shape);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace femlab
