// SPDX-License-Identifier: MIT
// Exception types shared across the femlab core library.
#pragma once

#include <stdexcept>
#include <string>

namespace femlab {

// Violation of a documented precondition (bad token id, wrong step index,
// mismatched vocabulary, empty input where non-empty is required, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

// A brute-force enumeration was requested on a shape whose outcome count
// exceeds the supported bound. Carries the offending count.
class EnumerationTooLarge : public std::runtime_error {
 public:
  EnumerationTooLarge(const std::string& what, double outcome_count)
      : std::runtime_error(what), outcomes(outcome_count) {}
  double outcomes;
};

// Training produced a non-finite parameter; message names the iteration and
// datapoint index that triggered the divergence.
class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what)
      : std::runtime_error(what) {}
};

// A file could not be read/written or failed to parse in a required format.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace femlab
