// SPDX-License-Identifier: MIT
#include "femlab/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <utility>

#include "femlab/oracle.hpp"
#include "femlab/posterior.hpp"
#include "femlab/presets.hpp"
#include "femlab/rng.hpp"
#include "femlab/samplers.hpp"
#include "femlab/task.hpp"

namespace femlab {

namespace {

// Suite tags for instance-seed derivation.
constexpr std::uint64_t kTagGrad = 0x61;
constexpr std::uint64_t kTagPosterior = 0x62;
constexpr std::uint64_t kTagBound = 0x63;
constexpr std::uint64_t kTagEm = 0x64;
constexpr std::uint64_t kTagMc = 0x65;

struct Instance {
  TaskShape shape;
  PolicyParams params;
  std::vector<int> x;
};

PolicyParams random_params(int vocab, Rng& rng, double scale = 2.0) {
  PolicyParams p = PolicyParams::zeros(vocab);
  for (double& w : p.transition) w = (rng.next_unit() * 2.0 - 1.0) * scale;
  for (double& w : p.answer) w = (rng.next_unit() * 2.0 - 1.0) * scale;
  return p;
}

std::vector<int> random_question(const TaskShape& shape, Rng& rng) {
  std::vector<int> x(shape.question_len);
  for (int& t : x) t = static_cast<int>(rng.next_below(shape.vocab));
  return x;
}

// Random enumerable instance: v <= 3, n <= 2, L_max <= 3.
Instance random_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  inst.shape.vocab = 2 + static_cast<int>(rng.next_below(2));
  inst.shape.question_len = 1 + static_cast<int>(rng.next_below(2));
  inst.shape.max_len = 1 + static_cast<int>(rng.next_below(3));
  inst.shape.variable_length = rng.next_below(2) == 1;
  inst.params = random_params(inst.shape.vocab, rng);
  inst.x = random_question(inst.shape, rng);
  return inst;
}

std::vector<int> random_rationale(const TaskShape& shape, Rng& rng) {
  const int len =
      shape.variable_length
          ? 1 + static_cast<int>(rng.next_below(shape.max_len))
          : shape.max_len;
  std::vector<int> z(len);
  for (int& t : z) t = static_cast<int>(rng.next_below(shape.vocab));
  return z;
}

CheckResult make_result(std::string name, std::uint64_t seed, double measured,
                        double threshold) {
  CheckResult r;
  r.name = std::move(name);
  r.seed = seed;
  r.measured = measured;
  r.threshold = threshold;
  r.pass = measured <= threshold;
  return r;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j)
    worst = std::max(worst, std::abs(a[j] - b[j]));
  return worst;
}

}  // namespace

std::vector<CheckResult> checks_gradients(std::uint64_t base_seed) {
  std::vector<CheckResult> results;

  // Closed-form sanity: two-class softmax at equal logits has derivative
  // 1/2 on the chosen logit; finite differences must land within 1e-8.
  {
    TaskShape shape{2, 1, 1, true};
    PolicyParams params = PolicyParams::zeros(2);
    const std::vector<int> x{0}, z{0};
    const std::vector<double> fd = fd_gradient(params, shape, x, z, 0);
    const double d_answer0 = fd[params.answer_offset() +
                               params.answer_index(0, 0)];
    results.push_back(make_result("grad-closed-form-half", base_seed,
                                  std::abs(d_answer0 - 0.5), 1e-8));
  }

  // Analytic gradient vs central finite differences on random instances.
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t seed = derive_stream(base_seed, kTagGrad, i, 0);
    Rng rng(splitmix64(seed));
    const Instance inst = random_instance(seed);
    const std::vector<int> z = random_rationale(inst.shape, rng);
    const int y = static_cast<int>(rng.next_below(inst.shape.vocab));
    const std::vector<double> g =
        grad_log_joint(inst.params, inst.shape, inst.x, z, y);
    const std::vector<double> fd =
        fd_gradient(inst.params, inst.shape, inst.x, z, y);
    double worst = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double rel =
          std::abs(g[j] - fd[j]) / std::max(1.0, std::abs(fd[j]));
      worst = std::max(worst, rel);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "grad-fd-agreement-%02d", i);
    results.push_back(make_result(name, seed, worst, 1e-6));
  }

  // Score-function identity: every used softmax row's gradient sums to 0.
  {
    double worst = 0.0;
    std::uint64_t seed0 = derive_stream(base_seed, kTagGrad, 100, 0);
    for (int i = 0; i < 10; ++i) {
      const std::uint64_t seed = derive_stream(base_seed, kTagGrad, 100 + i, 0);
      Rng rng(splitmix64(seed));
      const Instance inst = random_instance(seed);
      const std::vector<int> z = random_rationale(inst.shape, rng);
      const int y = static_cast<int>(rng.next_below(inst.shape.vocab));
      const std::vector<double> g =
          grad_log_joint(inst.params, inst.shape, inst.x, z, y);
      const int v = inst.shape.vocab;
      // Transition rows.
      for (int prev = 0; prev <= v; ++prev)
        for (int f = 0; f < v; ++f) {
          double sum = 0.0;
          for (int next = 0; next <= v; ++next)
            sum += g[inst.params.transition_index(prev, f, next)];
          worst = std::max(worst, std::abs(sum));
        }
      // Answer rows.
      for (int last = 0; last < v; ++last) {
        double sum = 0.0;
        for (int yy = 0; yy < v; ++yy)
          sum += g[inst.params.answer_offset() +
                   inst.params.answer_index(last, yy)];
        worst = std::max(worst, std::abs(sum));
      }
    }
    results.push_back(make_result("grad-row-sum-zero", seed0, worst, 1e-12));
  }
  return results;
}

std::vector<CheckResult> checks_posterior(std::uint64_t base_seed) {
  std::vector<CheckResult> results;

  // Joint normalization by brute force.
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t seed = derive_stream(base_seed, kTagPosterior, i, 0);
    const Instance inst = random_instance(seed);
    const EnumeratedJoint joint =
        enumerate_joint(inst.params, inst.shape, inst.x);
    char name[64];
    std::snprintf(name, sizeof(name), "joint-normalization-%02d", i);
    results.push_back(
        make_result(name, seed, std::abs(joint.total - 1.0), 1e-9));
  }

  // Backward-message marginal and tilted path probabilities vs enumeration.
  for (int i = 0; i < 20; ++i) {
    const std::uint64_t seed =
        derive_stream(base_seed, kTagPosterior, 100 + i, 0);
    Rng rng(splitmix64(seed));
    const Instance inst = random_instance(seed);
    const int y_star = static_cast<int>(rng.next_below(inst.shape.vocab));

    const PosteriorMessages msg =
        compute_messages(inst.params, inst.shape, inst.x, y_star);
    const EnumeratedJoint joint =
        enumerate_joint(inst.params, inst.shape, inst.x);
    double marginal = 0.0;
    for (const Outcome& o : joint.outcomes)
      if (o.y == y_star) marginal += o.prob;

    char name[64];
    std::snprintf(name, sizeof(name), "marginal-dp-vs-enum-%02d", i);
    results.push_back(make_result(
        name, seed, std::abs(std::exp(msg.log_marginal()) - marginal), 1e-10));

    const auto posterior =
        exact_posterior(inst.params, inst.shape, inst.x, y_star);
    double worst = 0.0;
    for (const auto& [z, prob] : posterior) {
      const double tilted = std::exp(
          posterior_log_prob(inst.params, inst.shape, inst.x, y_star, msg, z));
      worst = std::max(worst, std::abs(tilted - prob));
    }
    std::snprintf(name, sizeof(name), "posterior-dp-vs-enum-%02d", i);
    results.push_back(make_result(name, seed, worst, 1e-9));
  }

  // Posterior samples always carry the conditioning answer.
  {
    const std::uint64_t seed = derive_stream(base_seed, kTagPosterior, 999, 0);
    Rng rng(splitmix64(seed));
    double violations = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Instance inst =
          random_instance(derive_stream(base_seed, kTagPosterior, 300 + i, 0));
      const int y_star = static_cast<int>(rng.next_below(inst.shape.vocab));
      for (int s = 0; s < 5; ++s) {
        const auto [z, y] = sample_exact_posterior(inst.params, inst.shape,
                                                   inst.x, y_star, rng);
        if (y != y_star) violations += 1.0;
        if (z.empty() || static_cast<int>(z.size()) > inst.shape.max_len)
          violations += 1.0;
      }
    }
    results.push_back(
        make_result("posterior-sample-consistency", seed, violations, 0.0));
  }
  return results;
}

std::vector<CheckResult> checks_reward_bound(std::uint64_t base_seed) {
  std::vector<CheckResult> results;

  // The filtered objective plus its constant lower-bounds expected reward:
  // proposal = exact posterior at an independently perturbed parameter.
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t seed = derive_stream(base_seed, kTagBound, i, 0);
    Rng rng(splitmix64(seed));
    const Instance inst = random_instance(seed);
    PolicyParams perturbed = inst.params;
    for (double& w : perturbed.transition) w += rng.next_unit() * 2.0 - 1.0;
    for (double& w : perturbed.answer) w += rng.next_unit() * 2.0 - 1.0;
    Datapoint dp;
    dp.x = inst.x;
    dp.y_star = static_cast<int>(rng.next_below(inst.shape.vocab));
    const RewardBoundReport report = check_reward_lower_bound(
        inst.params, SchemeSpec::exact_posterior(), perturbed, inst.shape, dp);
    char name[64];
    std::snprintf(name, sizeof(name), "reward-bound-holds-%03d", i);
    results.push_back(
        make_result(name, seed, std::max(0.0, -report.gap), 1e-9));
  }

  // Tightness: with the proposal equal to the policy itself (rejection
  // sampling with budget 1 has exactly the policy's outcome law), the bound
  // meets the objective with zero gap.
  {
    const std::uint64_t seed0 = derive_stream(base_seed, kTagBound, 500, 0);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const std::uint64_t seed = derive_stream(base_seed, kTagBound, 500 + i, 0);
      Rng rng(splitmix64(seed));
      const Instance inst = random_instance(seed);
      Datapoint dp;
      dp.x = inst.x;
      dp.y_star = static_cast<int>(rng.next_below(inst.shape.vocab));
      const RewardBoundReport report = check_reward_lower_bound(
          inst.params, SchemeSpec::rs(1), inst.params, inst.shape, dp);
      worst = std::max(worst, std::abs(report.gap));
    }
    results.push_back(make_result("reward-bound-tightness", seed0, worst, 1e-9));
  }
  return results;
}

std::vector<CheckResult> checks_em(std::uint64_t base_seed) {
  std::vector<CheckResult> results;
  const TaskShape shape{2, 2, 2, true};

  // Marginal log-likelihood never decreases across consecutive exact steps.
  for (int s = 0; s < 5; ++s) {
    const std::uint64_t seed = derive_stream(base_seed, kTagEm, s, 0);
    Rng rng(splitmix64(seed));
    const Dataset ds = generate_dataset(shape, 16, 1, seed);
    PolicyParams params = random_params(2, rng);
    double worst = 0.0;
    for (int step = 0; step < 20; ++step) {
      const ExactEmResult r = exact_em_step(params, shape, ds.train, 10, 0.1);
      worst = std::max(worst, r.marginal_before - r.marginal_after);
      params = r.params;
    }
    char name[64];
    std::snprintf(name, sizeof(name), "em-monotone-seed-%d", s);
    results.push_back(make_result(name, seed, worst, 1e-10));
  }

  // Zero inner steps leave everything untouched.
  {
    const std::uint64_t seed = derive_stream(base_seed, kTagEm, 100, 0);
    Rng rng(splitmix64(seed));
    const Dataset ds = generate_dataset(shape, 4, 1, seed);
    const PolicyParams params = random_params(2, rng);
    const ExactEmResult r = exact_em_step(params, shape, ds.train, 0, 0.1);
    double measured = max_abs_diff(r.params.flatten(), params.flatten());
    measured = std::max(measured, std::abs(r.j_after - r.j_before));
    measured =
        std::max(measured, std::abs(r.marginal_after - r.marginal_before));
    results.push_back(make_result("em-identity-zero-steps", seed, measured, 0.0));
  }

  // Near the realizable optimum the marginal is already maximal.
  {
    const std::uint64_t seed = derive_stream(base_seed, kTagEm, 200, 0);
    const Dataset ds = generate_dataset(shape, 8, 1, seed);
    const PolicyParams star = make_optimal_params(shape);
    const ExactEmResult r = exact_em_step(star, shape, ds.train, 10, 0.1);
    results.push_back(make_result(
        "em-stationary-at-optimum", seed,
        std::abs(r.marginal_after - r.marginal_before), 1e-6));
  }
  return results;
}

std::vector<CheckResult> checks_unbiasedness(std::uint64_t base_seed) {
  std::vector<CheckResult> results;

  // Exact filtered gradient with the exact-posterior proposal equals the
  // posterior-weighted objective gradient (independent assembly).
  {
    const std::uint64_t seed0 = derive_stream(base_seed, kTagMc, 0, 0);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const std::uint64_t seed = derive_stream(base_seed, kTagMc, i, 0);
      Rng rng(splitmix64(seed));
      const Instance inst = random_instance(seed);
      Datapoint dp;
      dp.x = inst.x;
      dp.y_star = static_cast<int>(rng.next_below(inst.shape.vocab));
      const std::vector<double> filtered =
          exact_filtered_grad(inst.params, SchemeSpec::exact_posterior(),
                              inst.params, inst.shape, dp);
      const std::vector<double> em_grad =
          exact_em_gradient(inst.params, inst.shape, dp);
      worst = std::max(worst, max_abs_diff(filtered, em_grad));
    }
    results.push_back(
        make_result("filtered-grad-eq-chain", seed0, worst, 1e-10));
  }

  // Every scheme's closed-form outcome law is a probability distribution.
  {
    const std::uint64_t seed = derive_stream(base_seed, kTagMc, 50, 0);
    Rng rng(splitmix64(seed));
    const Instance inst = random_instance(seed);
    Datapoint dp;
    dp.x = inst.x;
    dp.y_star = static_cast<int>(rng.next_below(inst.shape.vocab));
    const SchemeSpec schemes[] = {
        SchemeSpec::rs(1),       SchemeSpec::rs(3),    SchemeSpec::rs(5),
        SchemeSpec::pps(0.0),    SchemeSpec::pps(0.1), SchemeSpec::pps(0.5),
        SchemeSpec::pps(1.0),    SchemeSpec::star(0.0),
        SchemeSpec::star(0.25),  SchemeSpec::star(1.0),
        SchemeSpec::exact_posterior()};
    double worst = 0.0;
    for (const SchemeSpec& scheme : schemes) {
      const auto law = scheme_outcome_law(inst.params, scheme, inst.shape, dp);
      double total = 0.0;
      for (const Outcome& o : law) total += o.prob;
      worst = std::max(worst, std::abs(total - 1.0));
    }
    results.push_back(make_result("law-total-mass", seed, worst, 1e-12));
  }

  // Monte-Carlo single-sample gradient estimates are unbiased for the exact
  // filtered gradient, scheme by scheme (1e5 draws, 4-SE band).
  {
    const TaskShape shape{2, 1, 2, true};
    const std::uint64_t inst_seed = derive_stream(base_seed, kTagMc, 100, 0);
    Rng inst_rng(splitmix64(inst_seed));
    const PolicyParams params = random_params(2, inst_rng);
    Datapoint dp;
    dp.x = random_question(shape, inst_rng);
    dp.y_star = static_cast<int>(inst_rng.next_below(2));

    const std::pair<const char*, SchemeSpec> schemes[] = {
        {"rs1", SchemeSpec::rs(1)},
        {"rs3", SchemeSpec::rs(3)},
        {"pps0.1", SchemeSpec::pps(0.1)},
        {"star0.1", SchemeSpec::star(0.1)},
        {"exact", SchemeSpec::exact_posterior()}};
    constexpr int kDraws = 100000;
    for (const auto& [tag, scheme] : schemes) {
      const std::vector<double> exact =
          exact_filtered_grad(params, scheme, params, shape, dp);
      std::vector<double> sum(exact.size(), 0.0), sumsq(exact.size(), 0.0);
      for (int d = 0; d < kDraws; ++d) {
        Rng rng(derive_stream(inst_seed, kTagMc, 200, d));
        const SampleRecord rec = draw_sample(params, shape, dp, scheme, rng);
        if (rec.reward == 0) continue;  // contributes a zero vector
        const std::vector<double> g =
            grad_log_joint(params, shape, dp.x, rec.z_hat, rec.y_hat);
        for (std::size_t j = 0; j < g.size(); ++j) {
          sum[j] += g[j];
          sumsq[j] += g[j] * g[j];
        }
      }
      double worst = 0.0;
      for (std::size_t j = 0; j < exact.size(); ++j) {
        const double mean = sum[j] / kDraws;
        const double var =
            std::max(0.0, sumsq[j] / kDraws - mean * mean);
        const double se = std::sqrt(var / kDraws);
        worst = std::max(worst, std::abs(mean - exact[j]) - 4.0 * se);
      }
      results.push_back(make_result(std::string("mc-unbiased-") + tag,
                                    inst_seed, worst, 1e-12));
    }
  }

  // Acceptance-rate arithmetic at the uniform policy (v = 5): exact law
  // rates match the closed forms, and empirical rates stay within 4 SE.
  {
    const TaskShape shape{5, 1, 2, true};
    const PolicyParams params = PolicyParams::zeros(5);
    Datapoint dp;
    dp.x = {3};
    dp.y_star = 3;
    const std::uint64_t seed = derive_stream(base_seed, kTagMc, 300, 0);
    const std::pair<SchemeSpec, double> cases[] = {
        {SchemeSpec::rs(1), 0.2},
        {SchemeSpec::rs(3), 0.488},
        {SchemeSpec::rs(5), 0.67232},
        {SchemeSpec::pps(0.1), 0.9 + 0.1 * 0.2},
        {SchemeSpec::pps(0.5), 0.5 + 0.5 * 0.2},
        {SchemeSpec::star(0.0), 1.0},
        {SchemeSpec::star(0.25), 0.2 + 0.8 * (0.75 + 0.25 * 0.2)}};
    constexpr int kTrials = 10000;
    for (const auto& [scheme, exact_rate] : cases) {
      const auto law = scheme_outcome_law(params, scheme, shape, dp);
      double law_rate = 0.0;
      for (const Outcome& o : law)
        if (o.y == dp.y_star) law_rate += o.prob;
      results.push_back(make_result(
          "acceptance-law-" + scheme.to_string(), seed,
          std::abs(law_rate - exact_rate), 1e-12));

      double accepted = 0.0;
      for (int t = 0; t < kTrials; ++t) {
        Rng rng(derive_stream(seed, kTagMc, 400, t));
        accepted += draw_sample(params, shape, dp, scheme, rng).reward;
      }
      const double empirical = accepted / kTrials;
      const double se =
          std::sqrt(exact_rate * (1.0 - exact_rate) / kTrials);
      results.push_back(make_result(
          "acceptance-rate-" + scheme.to_string(), seed,
          std::abs(empirical - exact_rate) - 4.0 * se, 1e-12));
    }
  }
  return results;
}

std::vector<CheckResult> run_suite(const std::string& suite,
                                   std::uint64_t base_seed) {
  if (suite == "gradients") return checks_gradients(base_seed);
  if (suite == "posterior") return checks_posterior(base_seed);
  if (suite == "lemma1") return checks_reward_bound(base_seed);
  if (suite == "em") return checks_em(base_seed);
  if (suite == "unbiasedness") return checks_unbiasedness(base_seed);
  if (suite == "all") {
    std::vector<CheckResult> all;
    for (const char* name :
         {"gradients", "posterior", "lemma1", "em", "unbiasedness"}) {
      std::vector<CheckResult> part = run_suite(name, base_seed);
      all.insert(all.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
    return all;
  }
  throw ContractViolation("unknown verify suite: " + suite);
}

std::string format_check_line(const CheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-32s seed=%020llu measured=%.9e threshold=%.1e %s",
                r.name.c_str(), static_cast<unsigned long long>(r.seed),
                r.measured, r.threshold, r.pass ? "PASS" : "FAIL");
  return buf;
}

}  // namespace femlab
