// SPDX-License-Identifier: MIT
// Named self-checks shared by the `femlab verify` subcommand and the
// acceptance test binary.
//
// Each check pits a fast-path computation against an independent oracle and
// reports the measured worst-case gap together with the threshold it must
// stay under. Checks are grouped into suites:
//   gradients    — analytic gradients vs central finite differences
//   posterior    — joint normalization, message/enumeration agreement,
//                  tilted-path probabilities, posterior sample consistency
//   lemma1       — reward lower-bound inequality and its tightness case
//   em           — exact generalized-EM monotonicity and stationarity
//   unbiasedness — exact filtered-gradient identities, Monte-Carlo
//                  unbiasedness per scheme, acceptance-rate arithmetic
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace femlab {

struct CheckResult {
  std::string name;
  std::uint64_t seed = 0;   // instance seed the check ran with
  double measured = 0.0;    // worst observed gap/error/statistic
  double threshold = 0.0;   // pass iff measured <= threshold
  bool pass = false;
};

std::vector<CheckResult> checks_gradients(std::uint64_t base_seed);
std::vector<CheckResult> checks_posterior(std::uint64_t base_seed);
std::vector<CheckResult> checks_reward_bound(std::uint64_t base_seed);
std::vector<CheckResult> checks_em(std::uint64_t base_seed);
std::vector<CheckResult> checks_unbiasedness(std::uint64_t base_seed);

// Suite dispatch. Valid names: "all", "gradients", "posterior", "lemma1",
// "em", "unbiasedness". Throws ContractViolation on an unknown suite.
std::vector<CheckResult> run_suite(const std::string& suite,
                                   std::uint64_t base_seed);

// Fixed-layout line: name, seed, measured, threshold, PASS/FAIL.
std::string format_check_line(const CheckResult& r);

}  // namespace femlab
