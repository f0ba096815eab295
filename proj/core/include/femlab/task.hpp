// SPDX-License-Identifier: MIT
// The synthetic reasoning task: modular prefix sums.
//
// A question x is a length-n string over the alphabet {0..v-1}; the ground
// truth answer is the modular sum of its tokens. The intended latent
// rationale is the chain of running prefix sums: conditioned on x and a
// correct chain, the answer is a deterministic read-off of the final state,
// which is what makes conditioning on the true answer informative.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "femlab/errors.hpp"

namespace femlab {

// Alphabet and length bounds shared by questions, rationales, and answers.
struct TaskShape {
  int vocab = 2;           // v: token alphabet {0..v-1}
  int question_len = 1;    // n: tokens per question
  int max_len = 1;         // L_max: longest admissible rationale
  bool variable_length = true;  // when false, every rationale has length L_max

  void validate() const {
    if (vocab < 2) throw ContractViolation("TaskShape: vocab must be >= 2");
    if (question_len < 1)
      throw ContractViolation("TaskShape: question_len must be >= 1");
    if (max_len < 1) throw ContractViolation("TaskShape: max_len must be >= 1");
  }
};

// One supervised example: a question and its ground-truth answer.
struct Datapoint {
  std::vector<int> x;  // question tokens, each < vocab
  int y_star = 0;      // ground-truth answer token
};

// Train/test split drawn independently from the same question distribution.
struct Dataset {
  std::vector<Datapoint> train;
  std::vector<Datapoint> test;
  std::uint64_t seed = 0;
};

// Binary exact-match reward.
inline int reward(int y_hat, int y_star) { return y_hat == y_star ? 1 : 0; }

// Ground-truth answer for a question: sum of tokens mod vocab.
int answer_of(const std::vector<int>& x, int vocab);

// Samples n_train + n_test questions uniformly over {0..v-1}^n and labels
// them with the modular-sum rule. Deterministic given (shape, counts, seed).
Dataset generate_dataset(const TaskShape& shape, std::size_t n_train,
                         std::size_t n_test, std::uint64_t seed);

// --- Dataset file format -------------------------------------------------
//
//   femlab-data v=<v> n=<n>
//   t1,t2,...,tn|answer        (one record per line)
//
// Round-trips bit-exactly (all fields are small integers).
struct DatapointFile {
  int vocab = 0;
  int question_len = 0;
  std::vector<Datapoint> records;
};

void write_datapoints(const std::string& path, int vocab, int question_len,
                      const std::vector<Datapoint>& records);
DatapointFile read_datapoints(const std::string& path);

}  // namespace femlab
