// SPDX-License-Identifier: MIT
#include "femlab/posterior.hpp"

#include <cmath>
#include <limits>

namespace femlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const std::vector<double>& values) {
  double max_v = kNegInf;
  for (double v : values)
    if (v > max_v) max_v = v;
  if (max_v == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - max_v);
  return max_v + std::log(sum);
}

void validate_inputs(const PolicyParams& params, const TaskShape& shape,
                     const std::vector<int>& x, int y_star) {
  params.validate(shape);
  if (static_cast<int>(x.size()) != shape.question_len)
    throw ContractViolation("question length does not match the task shape");
  for (int t : x)
    if (t < 0 || t >= shape.vocab)
      throw ContractViolation("question token out of range");
  if (y_star < 0 || y_star >= shape.vocab)
    throw ContractViolation("conditioning answer out of range");
}

// Unnormalized log-weights of the tilted step decision at step t (1-based)
// from state `prev` (BOS at t=1): weights[c] continues with token c,
// weights[v] stops (only where STOP is unmasked). ans_lp holds
// log p(y*|c) per last token c.
void tilted_weights(const PolicyParams& params, const TaskShape& shape,
                    const std::vector<int>& x, const PosteriorMessages& msg,
                    const std::vector<double>& ans_lp, int prev, int t,
                    std::vector<double>& w) {
  const int v = shape.vocab;
  const std::vector<double> lp = step_log_probs(params, shape, x, prev, t);
  w.assign(v + 1, kNegInf);
  for (int c = 0; c < v; ++c) w[c] = lp[c] + msg.at(t, c);
  if (lp[v] != kNegInf) w[v] = lp[v] + ans_lp[prev];  // prev is a real token
}

}  // namespace

PosteriorMessages compute_messages(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x, int y_star) {
  validate_inputs(params, shape, x, y_star);
  const int v = shape.vocab;
  const int max_len = shape.max_len;

  PosteriorMessages msg;
  msg.vocab = v;
  msg.max_len = max_len;
  msg.beta.assign(static_cast<std::size_t>(max_len + 1) * (v + 1), kNegInf);
  auto set = [&](int t, int c, double value) {
    msg.beta[static_cast<std::size_t>(t) * (v + 1) + c] = value;
  };

  // Length-max_len prefixes: the forced stop contributes nothing, so only
  // the answer remains.
  for (int c = 0; c < v; ++c) set(max_len, c, answer_log_probs(params, c)[y_star]);

  std::vector<double> branches;
  for (int t = max_len - 1; t >= 1; --t) {
    for (int c = 0; c < v; ++c) {
      const std::vector<double> lp = step_log_probs(params, shape, x, c, t + 1);
      branches.clear();
      // Stop branch: stop at step t+1, then answer from last token c.
      // beta(max_len, c) equals log p(y*|c), so it doubles as the answer
      // factor here.
      if (lp[v] != kNegInf) branches.push_back(lp[v] + msg.at(max_len, c));
      for (int next = 0; next < v; ++next)
        branches.push_back(lp[next] + msg.at(t + 1, next));
      set(t, c, logsumexp(branches));
    }
  }

  // Root: first step from BOS; STOP is masked at t = 1, so no stop branch.
  {
    const std::vector<double> lp =
        step_log_probs(params, shape, x, params.bos(), 1);
    branches.clear();
    for (int next = 0; next < v; ++next)
      branches.push_back(lp[next] + msg.at(1, next));
    set(0, params.bos(), logsumexp(branches));
  }
  return msg;
}

std::pair<std::vector<int>, int> sample_exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star, const PosteriorMessages& messages,
    Rng& rng) {
  validate_inputs(params, shape, x, y_star);
  const int v = shape.vocab;
  std::vector<double> ans_lp(v);
  for (int c = 0; c < v; ++c) ans_lp[c] = answer_log_probs(params, c)[y_star];

  std::vector<int> z;
  std::vector<double> w, probs(v + 1);
  int prev = params.bos();
  for (int t = 1; t <= shape.max_len; ++t) {
    tilted_weights(params, shape, x, messages, ans_lp, prev, t, w);
    double shift = kNegInf;
    for (double value : w)
      if (value > shift) shift = value;
    if (shift == kNegInf)
      throw ContractViolation(
          "posterior sampling: zero mass at every continuation");
    for (int j = 0; j <= v; ++j)
      probs[j] = w[j] == kNegInf ? 0.0 : std::exp(w[j] - shift);
    const int pick = static_cast<int>(rng.sample_discrete(probs));
    if (pick == v) break;  // stop decision: rationale ends here
    z.push_back(pick);
    prev = pick;
  }
  return {std::move(z), y_star};
}

std::pair<std::vector<int>, int> sample_exact_posterior(
    const PolicyParams& params, const TaskShape& shape,
    const std::vector<int>& x, int y_star, Rng& rng) {
  const PosteriorMessages msg = compute_messages(params, shape, x, y_star);
  return sample_exact_posterior(params, shape, x, y_star, msg, rng);
}

double posterior_log_prob(const PolicyParams& params, const TaskShape& shape,
                          const std::vector<int>& x, int y_star,
                          const PosteriorMessages& messages,
                          const std::vector<int>& z) {
  validate_inputs(params, shape, x, y_star);
  const int v = shape.vocab;
  const int len = static_cast<int>(z.size());
  if (len < 1 || len > shape.max_len)
    throw ContractViolation("rationale length out of range");
  if (!shape.variable_length && len != shape.max_len)
    throw ContractViolation(
        "rationale length must equal max_len for fixed-length shapes");
  std::vector<double> ans_lp(v);
  for (int c = 0; c < v; ++c) ans_lp[c] = answer_log_probs(params, c)[y_star];

  double total = 0.0;
  std::vector<double> w;
  int prev = params.bos();
  for (int t = 1; t <= len; ++t) {
    const int chosen = z[t - 1];
    if (chosen < 0 || chosen >= v)
      throw ContractViolation("rationale token out of range");
    tilted_weights(params, shape, x, messages, ans_lp, prev, t, w);
    total += w[chosen] - logsumexp(w);
    prev = chosen;
  }
  if (len < shape.max_len) {
    // The sampler must also have drawn the explicit stop decision.
    tilted_weights(params, shape, x, messages, ans_lp, prev, len + 1, w);
    total += w[v] - logsumexp(w);
  }
  return total;
}

}  // namespace femlab
