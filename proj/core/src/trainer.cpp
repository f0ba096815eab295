// SPDX-License-Identifier: MIT
#include "femlab/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "femlab/posterior.hpp"

namespace femlab {

namespace {

// Stream tags keeping the E-step, the update shuffle, and dataset
// generation on non-overlapping rng streams.
constexpr std::uint64_t kTagSample = 1;
constexpr std::uint64_t kTagShuffle = 2;

void apply_update(PolicyParams& params, double lr,
                  const std::vector<double>& grad) {
  const std::size_t t_size = params.transition.size();
  for (std::size_t j = 0; j < t_size; ++j)
    params.transition[j] += lr * grad[j];
  for (std::size_t j = 0; j < params.answer.size(); ++j)
    params.answer[j] += lr * grad[t_size + j];
}

bool all_finite(const PolicyParams& params) {
  for (double w : params.transition)
    if (!std::isfinite(w)) return false;
  for (double w : params.answer)
    if (!std::isfinite(w)) return false;
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 1)
    throw ContractViolation("TrainConfig: iterations must be >= 1");
  if (!(lr_end > 0.0) || !(lr_start >= lr_end))
    throw ContractViolation("TrainConfig: need lr_start >= lr_end > 0");
  scheme.validate();
}

double lr_at(const TrainConfig& cfg, int k) {
  if (k < 1 || k > cfg.iterations)
    throw ContractViolation("lr_at: iteration index out of range");
  // Exact endpoints by construction.
  if (k == 1) return cfg.lr_start;
  if (k == cfg.iterations) return cfg.lr_end;
  const double frac = static_cast<double>(k - 1) /
                      static_cast<double>(cfg.iterations - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
}

std::pair<double, double> evaluate(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<Datapoint>& data) {
  if (data.empty()) throw ContractViolation("evaluate: empty datapoint list");
  std::size_t correct = 0;
  double total_len = 0.0;
  for (const Datapoint& dp : data) {
    const auto [z, y] = greedy_decode(params, shape, dp.x);
    correct += y == dp.y_star ? 1 : 0;
    total_len += static_cast<double>(z.size());
  }
  const double n = static_cast<double>(data.size());
  return {static_cast<double>(correct) / n, total_len / n};
}

double utilization(const std::vector<SampleRecord>& records) {
  if (records.empty())
    throw ContractViolation("utilization: empty record list");
  double sum = 0.0;
  for (const SampleRecord& r : records) sum += r.reward;
  return sum / static_cast<double>(records.size());
}

std::pair<PolicyParams, std::vector<IterationMetrics>> fem_train(
    const Dataset& dataset, const TaskShape& shape, const PolicyParams& init,
    const TrainConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  init.validate(shape);
  if (dataset.train.empty())
    throw ContractViolation("fem_train: empty training split");
  if (dataset.test.empty())
    throw ContractViolation("fem_train: empty test split");

  const std::size_t n = dataset.train.size();
  PolicyParams params = init;
  std::vector<IterationMetrics> history;
  history.reserve(cfg.iterations);

  for (int k = 1; k <= cfg.iterations; ++k) {
    const double lr = lr_at(cfg, k);

    // E-step: one sample per datapoint from the frozen snapshot, each on an
    // independently derived stream (order-independent by construction).
    const PolicyParams snapshot = params;
    std::vector<SampleRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_stream(cfg.seed, kTagSample, static_cast<std::uint64_t>(k),
                            static_cast<std::uint64_t>(i)));
      records.push_back(
          draw_sample(snapshot, shape, dataset.train[i], cfg.scheme, rng, i));
    }

    // M-step: reward-filtered ascent, record by record.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle_updates) {
      Rng rng(derive_stream(cfg.seed, kTagShuffle,
                            static_cast<std::uint64_t>(k), 0));
      for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = rng.next_below(i + 1);
        std::swap(order[i], order[j]);
      }
    }
    const PolicyParams& grad_point = cfg.freeze_grad_point ? snapshot : params;
    for (std::size_t idx : order) {
      const SampleRecord& rec = records[idx];
      if (rec.reward == 0) continue;  // filtered out exactly
      const std::vector<double> grad = grad_log_joint(
          grad_point, shape, dataset.train[idx].x, rec.z_hat, rec.y_hat);
      apply_update(params, lr, grad);
      if (!all_finite(params))
        throw TrainingDiverged(
            "non-finite parameter after update: iteration " +
            std::to_string(k) + ", datapoint " + std::to_string(idx));
    }

    // Metrics on the post-update parameters.
    IterationMetrics m;
    m.iteration = k;
    const auto [acc, decoded_len] = evaluate(params, shape, dataset.test);
    m.test_accuracy = acc;
    m.mean_rationale_len_decoded = decoded_len;
    m.data_utilization = utilization(records);
    double accepted_len = 0.0, attempts = 0.0;
    std::size_t accepted = 0;
    for (const SampleRecord& rec : records) {
      attempts += rec.attempts_used;
      if (rec.reward == 1) {
        accepted_len += static_cast<double>(rec.z_hat.size());
        ++accepted;
      }
    }
    m.mean_rationale_len_accepted =
        accepted == 0 ? 0.0 : accepted_len / static_cast<double>(accepted);
    m.mean_attempts = attempts / static_cast<double>(n);
    double marginal = 0.0;
    for (const Datapoint& dp : dataset.train)
      marginal += compute_messages(params, shape, dp.x, dp.y_star)
                      .log_marginal();
    m.train_marginal_loglik = marginal / static_cast<double>(n);
    history.push_back(m);

    if (observer) {
      IterationTrace trace{k, records, order, lr, params, history.back()};
      observer(trace);
    }
  }
  return {std::move(params), std::move(history)};
}

}  // namespace femlab
