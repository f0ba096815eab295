// SPDX-License-Identifier: MIT
#include "femlab/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

namespace femlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_question(const std::vector<int>& x, const TaskShape& shape) {
  if (static_cast<int>(x.size()) != shape.question_len)
    throw ContractViolation("question length does not match the task shape");
  for (int t : x)
    if (t < 0 || t >= shape.vocab)
      throw ContractViolation("question token out of range");
}

void validate_rationale(const std::vector<int>& z, const TaskShape& shape) {
  const int len = static_cast<int>(z.size());
  if (len < 1 || len > shape.max_len)
    throw ContractViolation("rationale length out of range");
  if (!shape.variable_length && len != shape.max_len)
    throw ContractViolation(
        "rationale length must equal max_len for fixed-length shapes");
  for (int t : z)
    if (t < 0 || t >= shape.vocab)
      throw ContractViolation("rationale token out of range");
}

void validate_answer(int y, const TaskShape& shape) {
  if (y < 0 || y >= shape.vocab)
    throw ContractViolation("answer token out of range");
}

// Whether the STOP action is selectable at step t (1-based).
bool stop_allowed(const TaskShape& shape, int t) {
  if (t == 1) return false;
  if (!shape.variable_length && t <= shape.max_len) return false;
  return true;
}

// Log-softmax of the first `limit` entries of `row` into out[0..limit);
// out must be pre-filled with -inf beyond `limit` by the caller.
void log_softmax_prefix(const double* row, int limit, double* out) {
  double max_logit = row[0];
  for (int i = 1; i < limit; ++i)
    if (row[i] > max_logit) max_logit = row[i];
  double sum = 0.0;
  for (int i = 0; i < limit; ++i) sum += std::exp(row[i] - max_logit);
  const double log_z = max_logit + std::log(sum);
  for (int i = 0; i < limit; ++i) out[i] = row[i] - log_z;
}

// Fills `out` (size v+1) with the masked log step distribution and reports
// whether the step is the forced stop (point mass, zero contribution).
// The only maskable entry is STOP (the last index), so masking reduces to
// excluding it from the softmax.
bool step_log_probs_into(const PolicyParams& params, const TaskShape& shape,
                         const std::vector<int>& x, int prev, int t,
                         std::vector<double>& out) {
  const int v = shape.vocab;
  if (t < 1 || t > shape.max_len + 1)
    throw ContractViolation("step index out of range");
  if (prev < 0 || prev > v)
    throw ContractViolation("previous-token index out of range");
  out.assign(v + 1, kNegInf);
  if (t == shape.max_len + 1) {
    out[v] = 0.0;  // forced stop: point mass
    return true;
  }
  const int feature = x[(t - 1) % shape.question_len];
  const double* row =
      params.transition.data() + params.transition_index(prev, feature, 0);
  log_softmax_prefix(row, stop_allowed(shape, t) ? v + 1 : v, out.data());
  return false;
}

void answer_log_probs_into(const PolicyParams& params, int last,
                           std::vector<double>& out) {
  const int v = params.vocab;
  if (last < 0 || last >= v)
    throw ContractViolation("last-token index out of range");
  out.assign(v, 0.0);
  const double* row = params.answer.data() + params.answer_index(last, 0);
  log_softmax_prefix(row, v, out.data());
}

}  // namespace

PolicyParams PolicyParams::zeros(int vocab) {
  if (vocab < 2) throw ContractViolation("PolicyParams: vocab must be >= 2");
  PolicyParams p;
  p.vocab = vocab;
  p.transition.assign(static_cast<std::size_t>(vocab + 1) * vocab * (vocab + 1),
                      0.0);
  p.answer.assign(static_cast<std::size_t>(vocab) * vocab, 0.0);
  return p;
}

std::vector<double> PolicyParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  flat.insert(flat.end(), transition.begin(), transition.end());
  flat.insert(flat.end(), answer.begin(), answer.end());
  return flat;
}

PolicyParams PolicyParams::from_flat(int vocab,
                                     const std::vector<double>& flat) {
  PolicyParams p = zeros(vocab);
  if (flat.size() != p.param_count())
    throw ContractViolation("from_flat: wrong parameter count");
  std::copy(flat.begin(), flat.begin() + p.transition.size(),
            p.transition.begin());
  std::copy(flat.begin() + p.transition.size(), flat.end(), p.answer.begin());
  return p;
}

void PolicyParams::validate(const TaskShape& shape) const {
  shape.validate();
  if (vocab != shape.vocab)
    throw ContractViolation("policy vocabulary does not match the task shape");
  const std::size_t t_expect =
      static_cast<std::size_t>(vocab + 1) * vocab * (vocab + 1);
  const std::size_t a_expect = static_cast<std::size_t>(vocab) * vocab;
  if (transition.size() != t_expect || answer.size() != a_expect)
    throw ContractViolation("policy table sizes do not match the vocabulary");
  for (double w : transition)
    if (!std::isfinite(w))
      throw ContractViolation("non-finite transition logit");
  for (double w : answer)
    if (!std::isfinite(w)) throw ContractViolation("non-finite answer logit");
}

std::vector<double> step_log_probs(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x, int prev,
                                   int t) {
  shape.validate();
  if (params.vocab != shape.vocab)
    throw ContractViolation("policy vocabulary does not match the task shape");
  validate_question(x, shape);
  std::vector<double> out;
  step_log_probs_into(params, shape, x, prev, t, out);
  return out;
}

std::vector<double> step_distribution(const PolicyParams& params,
                                      const TaskShape& shape,
                                      const std::vector<int>& x, int prev,
                                      int t) {
  std::vector<double> lp = step_log_probs(params, shape, x, prev, t);
  for (double& v : lp) v = std::exp(v);  // exp(-inf) == 0 exactly
  return lp;
}

std::vector<double> answer_log_probs(const PolicyParams& params, int last) {
  std::vector<double> out;
  answer_log_probs_into(params, last, out);
  return out;
}

std::vector<double> answer_distribution(const PolicyParams& params, int last) {
  std::vector<double> lp = answer_log_probs(params, last);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double log_joint(const PolicyParams& params, const TaskShape& shape,
                 const std::vector<int>& x, const std::vector<int>& z,
                 int y) {
  params.validate(shape);
  validate_question(x, shape);
  validate_rationale(z, shape);
  validate_answer(y, shape);

  const int v = shape.vocab;
  const int len = static_cast<int>(z.size());
  double total = 0.0;
  std::vector<double> lp;
  int prev = params.bos();
  for (int t = 1; t <= len; ++t) {
    step_log_probs_into(params, shape, x, prev, t, lp);
    total += lp[z[t - 1]];
    prev = z[t - 1];
  }
  if (len < shape.max_len && shape.variable_length) {
    step_log_probs_into(params, shape, x, prev, len + 1, lp);
    total += lp[v];  // explicit STOP draw
  }
  // len == max_len: forced stop, zero contribution.
  answer_log_probs_into(params, z.back(), lp);
  total += lp[y];
  return total;
}

std::vector<double> grad_log_joint(const PolicyParams& params,
                                   const TaskShape& shape,
                                   const std::vector<int>& x,
                                   const std::vector<int>& z, int y) {
  params.validate(shape);
  validate_question(x, shape);
  validate_rationale(z, shape);
  validate_answer(y, shape);

  const int v = shape.vocab;
  const int len = static_cast<int>(z.size());
  std::vector<double> grad(params.param_count(), 0.0);
  std::vector<double> lp;

  auto add_step_row = [&](int prev, int t, int chosen) {
    const bool forced = step_log_probs_into(params, shape, x, prev, t, lp);
    if (forced) return;  // zero gradient by definition
    const int feature = x[(t - 1) % shape.question_len];
    const std::size_t base = params.transition_index(prev, feature, 0);
    for (int j = 0; j <= v; ++j) {
      if (lp[j] == -std::numeric_limits<double>::infinity()) continue;
      grad[base + j] -= std::exp(lp[j]);
    }
    grad[base + chosen] += 1.0;
  };

  int prev = params.bos();
  for (int t = 1; t <= len; ++t) {
    add_step_row(prev, t, z[t - 1]);
    prev = z[t - 1];
  }
  if (len < shape.max_len && shape.variable_length)
    add_step_row(prev, len + 1, v);

  answer_log_probs_into(params, z.back(), lp);
  const std::size_t base =
      params.answer_offset() + params.answer_index(z.back(), 0);
  for (int j = 0; j < v; ++j) grad[base + j] -= std::exp(lp[j]);
  grad[base + y] += 1.0;
  return grad;
}

std::pair<std::vector<int>, int> sample_rollout(const PolicyParams& params,
                                                const TaskShape& shape,
                                                const std::vector<int>& x,
                                                Rng& rng) {
  params.validate(shape);
  validate_question(x, shape);
  const int v = shape.vocab;
  std::vector<int> z;
  std::vector<double> lp, w(v + 1);
  int prev = params.bos();
  for (int t = 1; t <= shape.max_len; ++t) {
    step_log_probs_into(params, shape, x, prev, t, lp);
    for (int j = 0; j <= v; ++j) w[j] = std::exp(lp[j]);
    const int pick = static_cast<int>(rng.sample_discrete(w));
    if (pick == v) break;  // explicit STOP drawn
    z.push_back(pick);
    prev = pick;
  }
  // Reaching max_len stops without consuming a draw (forced stop).
  answer_log_probs_into(params, z.back(), lp);
  std::vector<double> aw(v);
  for (int j = 0; j < v; ++j) aw[j] = std::exp(lp[j]);
  const int y = static_cast<int>(rng.sample_discrete(aw));
  return {std::move(z), y};
}

std::pair<std::vector<int>, int> greedy_decode(const PolicyParams& params,
                                               const TaskShape& shape,
                                               const std::vector<int>& x) {
  params.validate(shape);
  validate_question(x, shape);
  const int v = shape.vocab;
  std::vector<int> z;
  std::vector<double> lp;
  int prev = params.bos();
  for (int t = 1; t <= shape.max_len; ++t) {
    step_log_probs_into(params, shape, x, prev, t, lp);
    // First strict maximum wins: ties resolve to the smallest token id, and
    // STOP (the last index) never wins a tie.
    int pick = 0;
    for (int j = 1; j <= v; ++j)
      if (lp[j] > lp[pick]) pick = j;
    if (pick == v) break;
    z.push_back(pick);
    prev = pick;
  }
  answer_log_probs_into(params, z.back(), lp);
  int y = 0;
  for (int j = 1; j < v; ++j)
    if (lp[j] > lp[y]) y = j;
  return {std::move(z), y};
}

void write_checkpoint(const std::string& path, const PolicyParams& params,
                      const TaskShape& shape) {
  params.validate(shape);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "femlab-policy v=" << shape.vocab << " n=" << shape.question_len
      << " Lmax=" << shape.max_len
      << " varlen=" << (shape.variable_length ? 1 : 0) << "\n";
  char buf[64];
  for (double value : params.flatten()) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) throw IoError("failed to format parameter");
    out.write(buf, ptr - buf);
    out.put('\n');
  }
  if (!out) throw IoError("write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw IoError("empty checkpoint file: " + path);

  TaskShape shape;
  int varlen = -1;
  {
    std::istringstream hs(header);
    std::string magic, f1, f2, f3, f4;
    hs >> magic >> f1 >> f2 >> f3 >> f4;
    auto field = [&](const std::string& s, const char* prefix) -> int {
      const std::size_t n = std::string(prefix).size();
      if (s.rfind(prefix, 0) != 0)
        throw IoError("bad checkpoint header in " + path + ": " + header);
      int value = 0;
      auto [ptr, ec] =
          std::from_chars(s.data() + n, s.data() + s.size(), value);
      if (ec != std::errc{} || ptr != s.data() + s.size())
        throw IoError("bad checkpoint header in " + path + ": " + header);
      return value;
    };
    if (magic != "femlab-policy")
      throw IoError("bad checkpoint header in " + path + ": " + header);
    shape.vocab = field(f1, "v=");
    shape.question_len = field(f2, "n=");
    shape.max_len = field(f3, "Lmax=");
    varlen = field(f4, "varlen=");
  }
  if (varlen != 0 && varlen != 1)
    throw IoError("bad varlen flag in checkpoint header: " + path);
  shape.variable_length = varlen == 1;
  shape.validate();

  PolicyParams params = PolicyParams::zeros(shape.vocab);
  std::vector<double> flat;
  flat.reserve(params.param_count());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double value = 0.0;
    auto [ptr, ec] =
        std::from_chars(line.data(), line.data() + line.size(), value);
    if (ec != std::errc{} || ptr != line.data() + line.size())
      throw IoError("malformed parameter line in " + path + ": " + line);
    flat.push_back(value);
  }
  if (flat.size() != params.param_count())
    throw IoError("checkpoint parameter count mismatch in " + path + ": got " +
                  std::to_string(flat.size()) + ", expected " +
                  std::to_string(params.param_count()));
  return Checkpoint{PolicyParams::from_flat(shape.vocab, flat), shape};
}

}  // namespace femlab
