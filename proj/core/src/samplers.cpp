// SPDX-License-Identifier: MIT
#include "femlab/samplers.hpp"

#include <charconv>
#include <cmath>

namespace femlab {

namespace {

void validate_datapoint(const Datapoint& dp, const TaskShape& shape) {
  if (static_cast<int>(dp.x.size()) != shape.question_len)
    throw ContractViolation("question length does not match the task shape");
  for (int t : dp.x)
    if (t < 0 || t >= shape.vocab)
      throw ContractViolation("question token out of range");
  if (dp.y_star < 0 || dp.y_star >= shape.vocab)
    throw ContractViolation("ground-truth answer out of range");
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

SchemeSpec SchemeSpec::rs(int budget) {
  SchemeSpec s;
  s.kind = Kind::kRejection;
  s.budget = budget;
  s.validate();
  return s;
}

SchemeSpec SchemeSpec::star(double epsilon) {
  SchemeSpec s;
  s.kind = Kind::kStar;
  s.epsilon = epsilon;
  s.validate();
  return s;
}

SchemeSpec SchemeSpec::pps(double epsilon) {
  SchemeSpec s;
  s.kind = Kind::kPosteriorMix;
  s.epsilon = epsilon;
  s.validate();
  return s;
}

SchemeSpec SchemeSpec::exact_posterior() {
  SchemeSpec s;
  s.kind = Kind::kExactPosterior;
  return s;
}

void SchemeSpec::validate() const {
  if (kind == Kind::kRejection && budget < 1)
    throw ContractViolation("rejection sampling budget must be >= 1");
  if ((kind == Kind::kStar || kind == Kind::kPosteriorMix) &&
      !(epsilon >= 0.0 && epsilon <= 1.0))
    throw ContractViolation("scheme fidelity epsilon must lie in [0, 1]");
}

std::string SchemeSpec::to_string() const {
  switch (kind) {
    case Kind::kRejection:
      return "rs:" + std::to_string(budget);
    case Kind::kStar:
      return "star:" + format_double(epsilon);
    case Kind::kPosteriorMix:
      return "pps:" + format_double(epsilon);
    case Kind::kExactPosterior:
      return "exact";
  }
  throw ContractViolation("unreachable scheme kind");
}

std::optional<SchemeSpec> SchemeSpec::parse(const std::string& text) {
  if (text == "exact") return exact_posterior();
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) return std::nullopt;
  const std::string head = text.substr(0, colon);
  const std::string tail = text.substr(colon + 1);
  if (tail.empty()) return std::nullopt;
  const char* first = tail.data();
  const char* last = tail.data() + tail.size();
  if (head == "rs") {
    int budget = 0;
    auto [ptr, ec] = std::from_chars(first, last, budget);
    if (ec != std::errc{} || ptr != last || budget < 1) return std::nullopt;
    return rs(budget);
  }
  if (head == "pps" || head == "star") {
    double epsilon = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, epsilon);
    if (ec != std::errc{} || ptr != last || !(epsilon >= 0.0) ||
        !(epsilon <= 1.0))
      return std::nullopt;
    return head == "pps" ? pps(epsilon) : star(epsilon);
  }
  return std::nullopt;
}

SampleRecord sample_rs(const PolicyParams& params, const TaskShape& shape,
                       const Datapoint& dp, int budget, Rng& rng,
                       std::size_t datapoint_index) {
  if (budget < 1)
    throw ContractViolation("rejection sampling budget must be >= 1");
  validate_datapoint(dp, shape);
  SampleRecord rec;
  rec.scheme = SchemeSpec::rs(budget);
  rec.datapoint_index = datapoint_index;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    auto [z, y] = sample_rollout(params, shape, dp.x, rng);
    rec.z_hat = std::move(z);
    rec.y_hat = y;
    rec.attempts_used = attempt;
    if (y == dp.y_star) {
      rec.reward = 1;
      return rec;
    }
  }
  // Budget exhausted: the final (M-th) sample is returned with reward 0.
  rec.reward = 0;
  return rec;
}

SampleRecord sample_exact_record(const PolicyParams& params,
                                 const TaskShape& shape, const Datapoint& dp,
                                 Rng& rng, std::size_t datapoint_index) {
  validate_datapoint(dp, shape);
  SampleRecord rec;
  rec.scheme = SchemeSpec::exact_posterior();
  rec.datapoint_index = datapoint_index;
  auto [z, y] = sample_exact_posterior(params, shape, dp.x, dp.y_star, rng);
  rec.z_hat = std::move(z);
  rec.y_hat = y;
  rec.reward = 1;  // posterior samples carry the conditioning answer
  rec.attempts_used = 1;
  return rec;
}

SampleRecord sample_pps(const PolicyParams& params, const TaskShape& shape,
                        const Datapoint& dp, double epsilon, Rng& rng,
                        std::size_t datapoint_index) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ContractViolation("scheme fidelity epsilon must lie in [0, 1]");
  validate_datapoint(dp, shape);
  SampleRecord rec;
  rec.scheme = SchemeSpec::pps(epsilon);
  rec.datapoint_index = datapoint_index;
  rec.attempts_used = 1;
  if (rng.next_unit() < epsilon) {
    // Infidelity branch: one raw rollout, reward by comparison.
    auto [z, y] = sample_rollout(params, shape, dp.x, rng);
    rec.z_hat = std::move(z);
    rec.y_hat = y;
    rec.reward = reward(y, dp.y_star);
  } else {
    auto [z, y] = sample_exact_posterior(params, shape, dp.x, dp.y_star, rng);
    rec.z_hat = std::move(z);
    rec.y_hat = y;
    rec.reward = 1;
  }
  return rec;
}

SampleRecord sample_star(const PolicyParams& params, const TaskShape& shape,
                         const Datapoint& dp, double epsilon, Rng& rng,
                         std::size_t datapoint_index) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ContractViolation("scheme fidelity epsilon must lie in [0, 1]");
  validate_datapoint(dp, shape);
  SampleRecord rec = sample_rs(params, shape, dp, 1, rng, datapoint_index);
  if (rec.reward == 1) {
    rec.scheme = SchemeSpec::star(epsilon);
    return rec;  // stage-1 shortcut: the plain rollout was already correct
  }
  // Stage 2: fall through to posterior sampling with the same fidelity.
  SampleRecord stage2 =
      sample_pps(params, shape, dp, epsilon, rng, datapoint_index);
  stage2.scheme = SchemeSpec::star(epsilon);
  stage2.attempts_used += 1;  // count the failed stage-1 rollout
  return stage2;
}

SampleRecord draw_sample(const PolicyParams& params, const TaskShape& shape,
                         const Datapoint& dp, const SchemeSpec& scheme,
                         Rng& rng, std::size_t datapoint_index) {
  scheme.validate();
  switch (scheme.kind) {
    case SchemeSpec::Kind::kRejection:
      return sample_rs(params, shape, dp, scheme.budget, rng, datapoint_index);
    case SchemeSpec::Kind::kStar:
      return sample_star(params, shape, dp, scheme.epsilon, rng,
                         datapoint_index);
    case SchemeSpec::Kind::kPosteriorMix:
      return sample_pps(params, shape, dp, scheme.epsilon, rng,
                        datapoint_index);
    case SchemeSpec::Kind::kExactPosterior:
      return sample_exact_record(params, shape, dp, rng, datapoint_index);
  }
  throw ContractViolation("unreachable scheme kind");
}

}  // namespace femlab
