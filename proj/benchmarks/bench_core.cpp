// SPDX-License-Identifier: MIT
// Microbenchmarks for the hot paths: joint scoring, gradients, the backward
// messages, posterior/rollout sampling, greedy decode, and one full training
// iteration on a small dataset.
#include <benchmark/benchmark.h>

#include <utility>
#include <vector>

#include "femlab/policy.hpp"
#include "femlab/posterior.hpp"
#include "femlab/presets.hpp"
#include "femlab/rng.hpp"
#include "femlab/task.hpp"
#include "femlab/trainer.hpp"

namespace {

using namespace femlab;

const TaskShape kShape{5, 4, 6, true};
const std::vector<int> kQuestion{3, 1, 4, 2};
const std::vector<int> kRationale{3, 4, 3, 0};
constexpr int kAnswer = 0;  // (3+1+4+2) mod 5

PolicyParams bench_params() { return make_base_policy(kShape); }

void BM_LogJoint(benchmark::State& state) {
  const PolicyParams params = bench_params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        log_joint(params, kShape, kQuestion, kRationale, kAnswer));
  }
}
BENCHMARK(BM_LogJoint);

void BM_GradLogJoint(benchmark::State& state) {
  const PolicyParams params = bench_params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        grad_log_joint(params, kShape, kQuestion, kRationale, kAnswer));
  }
}
BENCHMARK(BM_GradLogJoint);

void BM_ComputeMessages(benchmark::State& state) {
  const PolicyParams params = bench_params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_messages(params, kShape, kQuestion,
                                              kAnswer));
  }
}
BENCHMARK(BM_ComputeMessages);

void BM_SamplePosterior(benchmark::State& state) {
  const PolicyParams params = bench_params();
  const PosteriorMessages messages =
      compute_messages(params, kShape, kQuestion, kAnswer);
  Rng rng(derive_stream(7, 0, 0, 0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_exact_posterior(params, kShape, kQuestion,
                                                    kAnswer, messages, rng));
  }
}
BENCHMARK(BM_SamplePosterior);

void BM_SampleRollout(benchmark::State& state) {
  const PolicyParams params = bench_params();
  Rng rng(derive_stream(7, 0, 0, 1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_rollout(params, kShape, kQuestion, rng));
  }
}
BENCHMARK(BM_SampleRollout);

void BM_GreedyDecode(benchmark::State& state) {
  const PolicyParams params = bench_params();
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_decode(params, kShape, kQuestion));
  }
}
BENCHMARK(BM_GreedyDecode);

void BM_TrainIteration(benchmark::State& state) {
  const Dataset ds = generate_dataset(kShape, 200, 50, 11);
  const PolicyParams init = make_base_policy(kShape);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.seed = 11;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fem_train(ds, kShape, init, cfg));
  }
}
BENCHMARK(BM_TrainIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
