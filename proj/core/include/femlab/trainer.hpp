// SPDX-License-Identifier: MIT
// Reward-filtered EM training loop.
//
// Each iteration k (1-based):
//   E-step  — for every train datapoint, draw one SampleRecord from the
//             configured scheme using the frozen snapshot theta^(k-1); each
//             datapoint owns an independently derived rng stream, so the
//             E-step is order-independent.
//   M-step  — apply theta += lr_k * reward * grad log pi(z_hat, y_hat | x)
//             record by record (shuffled order by default), evaluating the
//             gradient at the continuously-updated parameters (or at the
//             frozen snapshot when freeze_grad_point is set).
//   metrics — greedy-decode accuracy and mean rationale length on the
//             held-out test set, plus utilization / attempts / marginal
//             log-likelihood diagnostics.
// The learning rate decays linearly from lr_start to lr_end across
// iterations and is constant within an iteration. Runs are bit-reproducible
// from (dataset, init, config).
#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "femlab/policy.hpp"
#include "femlab/samplers.hpp"
#include "femlab/task.hpp"

namespace femlab {

struct TrainConfig {
  int iterations = 10;       // K >= 1
  double lr_start = 0.035;   // eta_1 (calibrated for the canonical base policy)
  double lr_end = 0.02;      // eta_K, 0 < eta_K <= eta_1
  SchemeSpec scheme = SchemeSpec::pps(0.1);
  bool shuffle_updates = true;
  bool freeze_grad_point = false;  // evaluate gradients at the snapshot
  std::uint64_t seed = 0;

  void validate() const;
};

// Learning rate of iteration k (1-based): linear interpolation with exact
// endpoints eta(1) = lr_start and eta(K) = lr_end.
double lr_at(const TrainConfig& cfg, int k);

struct IterationMetrics {
  int iteration = 0;
  double test_accuracy = 0.0;
  double data_utilization = 0.0;  // mean reward over the iteration's records
  // Mean rationale length over accepted (reward-1) records; 0.0 sentinel
  // when the iteration accepted nothing.
  double mean_rationale_len_accepted = 0.0;
  double mean_rationale_len_decoded = 0.0;  // over greedy test decodes
  double mean_attempts = 0.0;
  // Mean over train datapoints of log P(y* | x) at the post-update
  // parameters (per-datapoint mean, comparable across dataset sizes).
  double train_marginal_loglik = 0.0;
};

// Everything observable about one completed iteration; handed to the
// observer callback before the next iteration begins. References stay valid
// only during the callback.
struct IterationTrace {
  int iteration;
  const std::vector<SampleRecord>& records;      // E-step, datapoint order
  const std::vector<std::size_t>& update_order;  // M-step application order
  double lr;
  const PolicyParams& params_after;
  const IterationMetrics& metrics;
};

using IterationObserver = std::function<void(const IterationTrace&)>;

// Runs the full loop and returns the final parameters with one metrics row
// per iteration. Throws TrainingDiverged (naming iteration and datapoint)
// if any update produces a non-finite parameter.
std::pair<PolicyParams, std::vector<IterationMetrics>> fem_train(
    const Dataset& dataset, const TaskShape& shape, const PolicyParams& init,
    const TrainConfig& cfg, const IterationObserver& observer = {});

// Greedy-decode accuracy and mean rationale length over a datapoint list.
std::pair<double, double> evaluate(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<Datapoint>& data);

// Mean reward of a record batch.
double utilization(const std::vector<SampleRecord>& records);

}  // namespace femlab
