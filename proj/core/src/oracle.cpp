// SPDX-License-Identifier: MIT
#include "femlab/oracle.hpp"

#include <cmath>
#include <string>

namespace femlab {

namespace {

// All admissible rationale lengths under a shape.
std::vector<int> admissible_lengths(const TaskShape& shape) {
  std::vector<int> lengths;
  if (shape.variable_length) {
    for (int len = 1; len <= shape.max_len; ++len) lengths.push_back(len);
  } else {
    lengths.push_back(shape.max_len);
  }
  return lengths;
}

// Applies fn to every rationale of each admissible length (odometer walk).
template <typename Fn>
void for_each_rationale(const TaskShape& shape, Fn&& fn) {
  for (int len : admissible_lengths(shape)) {
    std::vector<int> z(len, 0);
    while (true) {
      fn(z);
      int pos = len - 1;
      while (pos >= 0 && z[pos] == shape.vocab - 1) z[pos--] = 0;
      if (pos < 0) break;
      ++z[pos];
    }
  }
}

double marginal_of(const EnumeratedJoint& joint, int y_star) {
  double p = 0.0;
  for (const Outcome& o : joint.outcomes)
    if (o.y == y_star) p += o.prob;
  return p;
}

void axpy(std::vector<double>& acc, double a, const std::vector<double>& g) {
  for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += a * g[j];
}

}  // namespace

double outcome_count(const TaskShape& shape) {
  shape.validate();
  double count = 0.0;
  for (int len : admissible_lengths(shape))
    count += std::pow(static_cast<double>(shape.vocab), len);
  return count * shape.vocab;  // every rationale pairs with v answers
}

EnumeratedJoint enumerate_joint(const PolicyParams& params,
                                const TaskShape& shape,
                                const std::vector<int>& x) {
  params.validate(shape);
  const double count = outcome_count(shape);
  if (count > 1e6)
    throw EnumerationTooLarge(
        "enumeration refused: shape admits " + std::to_string(count) +
            " outcomes (limit 1e6)",
        count);

  EnumeratedJoint joint;
  joint.outcomes.reserve(static_cast<std::size_t>(count));
  for_each_rationale(shape, [&](const std::vector<int>& z) {
    for (int y = 0; y < shape.vocab; ++y) {
      Outcome o;
      o.z = z;
      o.y = y;
      o.prob = std::exp(log_joint(params, shape, x, z, y));
      joint.total += o.prob;
      joint.outcomes.push_back(std::move(o));
    }
  });
  return joint;
}

std::vector<std::pair<std::vector<int>, double>> exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star) {
  if (y_star < 0 || y_star >= shape.vocab)
    throw ContractViolation("conditioning answer out of range");
  const EnumeratedJoint joint = enumerate_joint(params, shape, x);
  const double marginal = marginal_of(joint, y_star);
  if (!(marginal > 0.0))
    throw ContractViolation(
        "exact_posterior: conditioning answer has zero marginal probability");
  std::vector<std::pair<std::vector<int>, double>> posterior;
  for (const Outcome& o : joint.outcomes)
    if (o.y == y_star) posterior.emplace_back(o.z, o.prob / marginal);
  return posterior;
}

std::vector<Outcome> scheme_outcome_law(const PolicyParams& params_q,
                                        const SchemeSpec& scheme,
                                        const TaskShape& shape,
                                        const Datapoint& dp) {
  scheme.validate();
  const EnumeratedJoint joint = enumerate_joint(params_q, shape, dp.x);
  const double p = marginal_of(joint, dp.y_star);
  if (!(p > 0.0))
    throw ContractViolation(
        "scheme_outcome_law: conditioning answer has zero marginal");

  std::vector<Outcome> law = joint.outcomes;  // reuse (z, y) skeleton
  switch (scheme.kind) {
    case SchemeSpec::Kind::kExactPosterior: {
      std::vector<Outcome> posterior_only;
      for (Outcome& o : law)
        if (o.y == dp.y_star) {
          o.prob /= p;
          posterior_only.push_back(std::move(o));
        }
      return posterior_only;
    }
    case SchemeSpec::Kind::kRejection: {
      // Accepted: first success within the budget can happen at attempt m
      // after m-1 full misses. Missed: all M attempts fail and the M-th
      // sample (conditioned on being a miss) is returned.
      double accept_factor = 0.0;  // sum_{m=1..M} (1-p)^(m-1)
      double miss_factor = 1.0;    // (1-p)^(M-1)
      double pow_term = 1.0;
      for (int m = 1; m <= scheme.budget; ++m) {
        accept_factor += pow_term;
        if (m < scheme.budget) pow_term *= 1.0 - p;
      }
      miss_factor = pow_term;  // (1-p)^(M-1) after the loop
      for (Outcome& o : law)
        o.prob *= o.y == dp.y_star ? accept_factor : miss_factor;
      return law;
    }
    case SchemeSpec::Kind::kPosteriorMix: {
      const double eps = scheme.epsilon;
      for (Outcome& o : law) {
        double prob = eps * o.prob;
        if (o.y == dp.y_star) prob += (1.0 - eps) * (o.prob / p);
        o.prob = prob;
      }
      return law;
    }
    case SchemeSpec::Kind::kStar: {
      // Stage 1 accepts a correct rollout outright; otherwise (probability
      // 1-p) stage 2 draws from the posterior mixture.
      const double eps = scheme.epsilon;
      for (Outcome& o : law) {
        double stage2 = eps * o.prob;
        if (o.y == dp.y_star) stage2 += (1.0 - eps) * (o.prob / p);
        o.prob = (o.y == dp.y_star ? o.prob : 0.0) + (1.0 - p) * stage2;
      }
      return law;
    }
  }
  throw ContractViolation("unreachable scheme kind");
}

std::vector<double> exact_filtered_grad(const PolicyParams& params_at,
                                        const SchemeSpec& scheme,
                                        const PolicyParams& params_q,
                                        const TaskShape& shape,
                                        const Datapoint& dp) {
  params_at.validate(shape);
  const std::vector<Outcome> law = scheme_outcome_law(params_q, scheme, shape, dp);
  std::vector<double> acc(params_at.param_count(), 0.0);
  for (const Outcome& o : law) {
    if (o.y != dp.y_star || o.prob <= 0.0) continue;  // reward filter
    axpy(acc, o.prob, grad_log_joint(params_at, shape, dp.x, o.z, o.y));
  }
  return acc;
}

std::vector<double> exact_em_gradient(const PolicyParams& params,
                                      const TaskShape& shape,
                                      const Datapoint& dp) {
  const auto posterior = exact_posterior(params, shape, dp.x, dp.y_star);
  std::vector<double> acc(params.param_count(), 0.0);
  for (const auto& [z, prob] : posterior)
    axpy(acc, prob, grad_log_joint(params, shape, dp.x, z, dp.y_star));
  return acc;
}

RewardBoundReport check_reward_lower_bound(const PolicyParams& theta,
                                           const SchemeSpec& scheme,
                                           const PolicyParams& params_q,
                                           const TaskShape& shape,
                                           const Datapoint& dp) {
  theta.validate(shape);
  const std::vector<Outcome> law =
      scheme_outcome_law(params_q, scheme, shape, dp);
  const EnumeratedJoint joint_theta = enumerate_joint(theta, shape, dp.x);

  RewardBoundReport report;
  report.rhs = marginal_of(joint_theta, dp.y_star);
  double lhs = 0.0;
  double c_term = 0.0;
  for (const Outcome& o : law) {
    if (o.y != dp.y_star || o.prob <= 0.0) continue;  // reward-filtered
    const double log_pi = log_joint(theta, shape, dp.x, o.z, o.y);
    lhs += o.prob * log_pi;
    c_term += o.prob * (1.0 - std::log(o.prob));
  }
  report.C = c_term;
  report.lhs_plus_C = lhs + c_term;
  report.gap = report.rhs - report.lhs_plus_C;
  report.holds = report.rhs >= report.lhs_plus_C - 1e-9;
  return report;
}

ExactEmResult exact_em_step(const PolicyParams& params, const TaskShape& shape,
                            const std::vector<Datapoint>& data,
                            int inner_steps, double inner_lr) {
  params.validate(shape);
  if (inner_steps < 0)
    throw ContractViolation("exact_em_step: inner_steps must be >= 0");
  if (data.empty())
    throw ContractViolation("exact_em_step: empty dataset");

  // Freeze the posterior of every datapoint at the input parameters.
  std::vector<std::vector<std::pair<std::vector<int>, double>>> posteriors;
  posteriors.reserve(data.size());
  for (const Datapoint& dp : data)
    posteriors.push_back(exact_posterior(params, shape, dp.x, dp.y_star));

  // Expected complete-data objective under the frozen posteriors.
  auto objective = [&](const PolicyParams& at) {
    double j = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
      for (const auto& [z, prob] : posteriors[i])
        j += prob * log_joint(at, shape, data[i].x, z, data[i].y_star);
    return j;
  };
  auto objective_grad = [&](const PolicyParams& at) {
    std::vector<double> acc(at.param_count(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i)
      for (const auto& [z, prob] : posteriors[i])
        axpy(acc, prob, grad_log_joint(at, shape, data[i].x, z,
                                       data[i].y_star));
    return acc;
  };
  auto marginal = [&](const PolicyParams& at) {
    double total = 0.0;
    for (const Datapoint& dp : data) {
      const EnumeratedJoint joint = enumerate_joint(at, shape, dp.x);
      total += std::log(marginal_of(joint, dp.y_star));
    }
    return total;
  };

  ExactEmResult result;
  result.j_before = objective(params);
  result.marginal_before = marginal(params);

  PolicyParams current = params;
  for (int step = 0; step < inner_steps; ++step) {
    const std::vector<double> g = objective_grad(current);
    std::vector<double> flat = current.flatten();
    for (std::size_t j = 0; j < flat.size(); ++j) flat[j] += inner_lr * g[j];
    current = PolicyParams::from_flat(current.vocab, flat);
  }

  result.j_after = objective(current);
  result.marginal_after = marginal(current);
  result.params = std::move(current);
  return result;
}

std::vector<double> fd_gradient(const PolicyParams& params,
                                const TaskShape& shape,
                                const std::vector<int>& x,
                                const std::vector<int>& z, int y, double h) {
  if (!(h > 0.0)) throw ContractViolation("fd_gradient: h must be positive");
  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size(), 0.0);
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const double saved = flat[j];
    flat[j] = saved + h;
    const double up =
        log_joint(PolicyParams::from_flat(params.vocab, flat), shape, x, z, y);
    flat[j] = saved - h;
    const double down =
        log_joint(PolicyParams::from_flat(params.vocab, flat), shape, x, z, y);
    flat[j] = saved;
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace femlab
