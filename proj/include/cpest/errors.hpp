#pragma once

#include <stdexcept>

namespace cpest {

/// Invalid scalar argument (out-of-range probability, nonpositive radius, ...).
struct DomainError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Matrix or vector shape mismatch.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure in a kernel (factorization, root finding).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input matrix is not positive semidefinite within tolerance.
struct NotPsdError : NumericalError {
  using NumericalError::NumericalError;
};

/// Model falls outside the supported closed-form regime
/// (repeated or zero characteristic roots, for instance).
struct UnsupportedModelError : NumericalError {
  using NumericalError::NumericalError;
};

/// Scenario document violates the schema or an invariant.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem or stream failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cpest
