#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qgraph {

// Base class for all library failures.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user input: bad constructor arguments, malformed config, ranges
// that make no sense. Maps to CLI exit code 2.
struct InvalidInput : Error {
  using Error::Error;
};

// Structured config file failed to parse or validate. Maps to CLI exit code 2.
struct ConfigError : InvalidInput {
  using InvalidInput::InvalidInput;
};

// Operation not defined for the requested boundary variant
// (vertex scattering matrices exist only for the zero-strength case).
struct UnsupportedVariant : InvalidInput {
  using InvalidInput::InvalidInput;
};

// A statistical estimator was asked to run on too small a sample.
struct InsufficientData : InvalidInput {
  using InvalidInput::InvalidInput;
};

// Counting-function audit failed even after rescanning: some subinterval
// holds fewer roots than the mean density predicts. Maps to CLI exit code 3.
struct MissingLevels : Error {
  double lo = 0.0;
  double hi = 0.0;
  double expected = 0.0;
  std::size_t found = 0;
  MissingLevels(const std::string& msg, double lo_, double hi_, double expected_,
                std::size_t found_)
      : Error(msg), lo(lo_), hi(hi_), expected(expected_), found(found_) {}
};

// Zero counts along a torus sweep disagreed across probe points.
struct SheetAmbiguity : Error {
  using Error::Error;
};

// Sheet counts violate sum(m_i * l_i) = 2 * total_length.
struct SumRuleMismatch : Error {
  double lhs = 0.0;
  double rhs = 0.0;
  SumRuleMismatch(const std::string& msg, double lhs_, double rhs_)
      : Error(msg), lhs(lhs_), rhs(rhs_) {}
};

// Branch continuation or first-return search could not make progress.
struct ContinuationFailure : Error {
  using Error::Error;
};

}  // namespace qgraph
