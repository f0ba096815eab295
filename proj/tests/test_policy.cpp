// SPDX-License-Identifier: MIT
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "femlab/errors.hpp"
#include "femlab/oracle.hpp"
#include "femlab/policy.hpp"
#include "femlab/presets.hpp"
#include "femlab/rng.hpp"
#include "femlab/task.hpp"

using namespace femlab;

namespace {

PolicyParams random_params(int vocab, std::uint64_t seed, double scale = 1.5) {
  Rng rng(seed);
  PolicyParams p = PolicyParams::zeros(vocab);
  for (double& w : p.transition) w = (rng.next_unit() * 2.0 - 1.0) * scale;
  for (double& w : p.answer) w = (rng.next_unit() * 2.0 - 1.0) * scale;
  return p;
}

}  // namespace

TEST_CASE("step distributions are normalized with the right support") {
  const PolicyParams params = random_params(3, 11);
  const TaskShape varlen{3, 2, 3, true};
  const TaskShape fixed{3, 2, 3, false};
  const std::vector<int> x{1, 2};

  for (int t = 1; t <= 3; ++t) {
    for (int prev : {3, 0, 1, 2}) {  // BOS and every token
      if (t == 1 && prev != 3) continue;
      if (t > 1 && prev == 3) continue;
      const std::vector<double> pv =
          step_distribution(params, varlen, x, prev, t);
      const std::vector<double> pf =
          step_distribution(params, fixed, x, prev, t);
      REQUIRE(pv.size() == 4);
      const double sum_v = std::accumulate(pv.begin(), pv.end(), 0.0);
      const double sum_f = std::accumulate(pf.begin(), pf.end(), 0.0);
      CHECK(sum_v == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(sum_f == doctest::Approx(1.0).epsilon(1e-12));
      // STOP masked at t=1 always, and at every t <= max_len when lengths
      // are fixed.
      if (t == 1) CHECK(pv[3] == 0.0);
      CHECK(pf[3] == 0.0);
      if (t > 1) CHECK(pv[3] > 0.0);
    }
  }
  // Forced STOP past the length bound: a point mass.
  const std::vector<double> forced =
      step_distribution(params, varlen, x, 1, 4);
  CHECK(forced[3] == 1.0);
  CHECK(forced[0] == 0.0);
  const std::vector<double> forced_f =
      step_distribution(params, fixed, x, 2, 4);
  CHECK(forced_f[3] == 1.0);
}

TEST_CASE("uniform-policy greedy decode picks the smallest-index path") {
  const PolicyParams params = PolicyParams::zeros(2);
  const TaskShape shape{2, 1, 2, true};
  const auto [z, y] = greedy_decode(params, shape, {1});
  CHECK(z == std::vector<int>{0, 0});
  CHECK(y == 0);
}

TEST_CASE("log_joint at the uniform policy matches hand-computed factors") {
  const PolicyParams params = PolicyParams::zeros(2);
  const TaskShape shape{2, 1, 2, true};
  // One token then STOP: step over {0,1} (STOP masked at t=1), explicit STOP
  // over {0,1,STOP}, answer over {0,1}.
  const double lp1 = log_joint(params, shape, {0}, {1}, 0);
  CHECK(lp1 == doctest::Approx(std::log(1.0 / 2) + std::log(1.0 / 3) +
                               std::log(1.0 / 2))
                   .epsilon(1e-12));
  // Full-length rationale: no explicit STOP factor (the stop is forced).
  const double lp2 = log_joint(params, shape, {0}, {1, 0}, 1);
  CHECK(lp2 == doctest::Approx(std::log(1.0 / 2) + std::log(1.0 / 3) +
                               std::log(1.0 / 2))
                   .epsilon(1e-12));
}

TEST_CASE("log_joint rejects malformed inputs") {
  const PolicyParams params = PolicyParams::zeros(2);
  const TaskShape varlen{2, 1, 2, true};
  const TaskShape fixed{2, 1, 2, false};
  CHECK_THROWS_AS((void)log_joint(params, varlen, {0}, {}, 0),
                  ContractViolation);
  CHECK_THROWS_AS((void)log_joint(params, varlen, {0}, {0, 1, 0}, 0),
                  ContractViolation);
  CHECK_THROWS_AS((void)log_joint(params, varlen, {0}, {2}, 0),
                  ContractViolation);
  CHECK_THROWS_AS((void)log_joint(params, varlen, {0}, {0}, 2),
                  ContractViolation);
  CHECK_THROWS_AS((void)log_joint(params, varlen, {0, 1}, {0}, 0),
                  ContractViolation);
  CHECK_THROWS_AS((void)log_joint(params, fixed, {0}, {0}, 0),
                  ContractViolation);
  CHECK_NOTHROW((void)log_joint(params, fixed, {0}, {0, 1}, 0));
}

TEST_CASE("exp(log_joint) sums to one over all outcomes") {
  for (const bool varlen : {true, false}) {
    const TaskShape shape{3, 2, 2, varlen};
    const PolicyParams params = random_params(3, 17);
    const EnumeratedJoint joint = enumerate_joint(params, shape, {0, 2});
    CHECK(std::abs(joint.total - 1.0) <= 1e-9);
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  const TaskShape shape{3, 2, 3, true};
  const PolicyParams params = random_params(3, 23);
  const std::vector<int> x{2, 0}, z{1, 2};
  const int y = 1;
  const std::vector<double> g = grad_log_joint(params, shape, x, z, y);
  const std::vector<double> fd = fd_gradient(params, shape, x, z, y);
  double worst = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j)
    worst = std::max(worst,
                     std::abs(g[j] - fd[j]) / std::max(1.0, std::abs(fd[j])));
  CHECK(worst < 1e-6);
}

TEST_CASE("rollouts follow the joint law (chi-squared at 0.999)") {
  // Frozen 0.999 quantile of chi^2 with 11 degrees of freedom, for the 12
  // enumerable outcomes of the v=2, n=1, L_max=2 variable-length shape.
  constexpr double kChi2Df11 = 31.264133620239985;
  const TaskShape shape{2, 1, 2, true};
  const PolicyParams params = random_params(2, 31);
  const std::vector<int> x{1};

  const EnumeratedJoint joint = enumerate_joint(params, shape, x);
  REQUIRE(joint.outcomes.size() == 12);

  std::map<std::pair<std::vector<int>, int>, int> counts;
  constexpr int kDraws = 100000;
  Rng rng(derive_stream(777, 1, 2, 3));
  for (int i = 0; i < kDraws; ++i) {
    const auto [z, y] = sample_rollout(params, shape, x, rng);
    ++counts[{z, y}];
  }
  double chi2 = 0.0;
  for (const Outcome& o : joint.outcomes) {
    const double expected = kDraws * o.prob;
    const auto it = counts.find({o.z, o.y});
    const double observed = it == counts.end() ? 0.0 : it->second;
    REQUIRE(expected > 0.0);
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  CHECK(chi2 < kChi2Df11);
}

TEST_CASE("answer marginal is uniform at the zero policy (chi-squared)") {
  // Frozen 0.999 quantile of chi^2 with 4 degrees of freedom (v = 5 bins).
  constexpr double kChi2Df4 = 18.46682695290317;
  const TaskShape shape{5, 1, 2, true};
  const PolicyParams params = PolicyParams::zeros(5);
  std::vector<int> counts(5, 0);
  constexpr int kDraws = 100000;
  Rng rng(derive_stream(778, 1, 2, 3));
  for (int i = 0; i < kDraws; ++i)
    ++counts[sample_rollout(params, shape, {3}, rng).second];
  double chi2 = 0.0;
  for (int c : counts) {
    const double expected = kDraws / 5.0;
    chi2 += (c - expected) * (c - expected) / expected;
  }
  CHECK(chi2 < kChi2Df4);
}

TEST_CASE("optimal parameters decode perfectly when max_len = n") {
  for (const TaskShape shape : {TaskShape{5, 4, 4, true},
                                TaskShape{3, 2, 2, true}}) {
    const PolicyParams star = make_optimal_params(shape);
    const Dataset ds = generate_dataset(shape, 1, 400, 3);
    int correct = 0;
    for (const Datapoint& dp : ds.test)
      correct += greedy_decode(star, shape, dp.x).second == dp.y_star;
    CHECK(correct == 400);

    Rng rng(5);
    int rollout_correct = 0;
    for (int i = 0; i < 100; ++i) {
      const Datapoint& dp = ds.test[i];
      rollout_correct +=
          sample_rollout(star, shape, dp.x, rng).second == dp.y_star;
    }
    CHECK(rollout_correct == 100);
  }
}

TEST_CASE("never-correct parameters never hit the answer") {
  const TaskShape shape{3, 2, 2, true};
  const PolicyParams bad = make_never_correct_params(shape);
  const Dataset ds = generate_dataset(shape, 1, 200, 4);
  Rng rng(6);
  int hits = 0;
  for (const Datapoint& dp : ds.test)
    hits += sample_rollout(bad, shape, dp.x, rng).second == dp.y_star;
  CHECK(hits == 0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const TaskShape shape{3, 2, 4, false};
  const PolicyParams params = random_params(3, 41, 3.7);
  const auto path =
      std::filesystem::temp_directory_path() / "femlab_test_ckpt.txt";
  write_checkpoint(path.string(), params, shape);
  const Checkpoint loaded = read_checkpoint(path.string());
  CHECK(loaded.shape.vocab == 3);
  CHECK(loaded.shape.question_len == 2);
  CHECK(loaded.shape.max_len == 4);
  CHECK(loaded.shape.variable_length == false);
  CHECK(loaded.params.flatten() == params.flatten());
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto path =
      std::filesystem::temp_directory_path() / "femlab_test_ckpt_bad.txt";
  std::filesystem::remove(path);
  CHECK_THROWS_AS((void)read_checkpoint(path.string()), IoError);
  {
    std::ofstream out(path);
    out << "femlab-policy v=2 n=1 Lmax=2 varlen=1\n1.0\n";  // too few values
  }
  CHECK_THROWS_AS((void)read_checkpoint(path.string()), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("PolicyParams layout and validation") {
  PolicyParams p = PolicyParams::zeros(3);
  CHECK(p.bos() == 3);
  CHECK(p.stop() == 3);
  CHECK(p.transition.size() == 4u * 3u * 4u);
  CHECK(p.answer.size() == 9u);
  CHECK(p.param_count() == 48u + 9u);
  CHECK(p.answer_offset() == 48u);

  const std::vector<double> flat = p.flatten();
  CHECK(flat.size() == p.param_count());
  const PolicyParams q = PolicyParams::from_flat(3, flat);
  CHECK(q.flatten() == flat);

  const TaskShape shape{3, 2, 2, true};
  CHECK_NOTHROW(p.validate(shape));
  const TaskShape wrong{4, 2, 2, true};
  CHECK_THROWS_AS(p.validate(wrong), ContractViolation);
}
