#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace noisegeom {

/// Base of every error thrown by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: wrong dimensions, out-of-range arguments, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Problem size exceeds a configured limit (e.g. the dense eigensolver cutoff).
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Operation only defined for over-parameterized linear models.
class UnsupportedFamilyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Floating-point result violates an invariant that valid inputs guarantee.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver ran out of iterations. Carries the best residuals reached.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : NumericalError(what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

}  // namespace noisegeom
