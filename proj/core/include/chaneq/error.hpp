#pragma once

#include <stdexcept>
#include <string>

namespace chaneq {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but degenerate (zero trace, zero variance scale, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// An iterative method diverged. Carries the last residual observed.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Layer state does not permit the requested operation (eval without running stats, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Bad experiment or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaneq
