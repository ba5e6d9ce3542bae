#pragma once

#include <stdexcept>
#include <string>

namespace otrw {

// Bad argument or configuration supplied by the caller. The CLI maps this to
// exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation, e.g. a quantile
// level outside (0, 1).
class DomainError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A solver or numerical routine failed (non-finite values, singular
// matrices, constraint sets that are empty). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The requested constraint level cannot be met by any point of the simplex.
class InfeasibleError : public NumericalError {
 public:
  InfeasibleError(const std::string& what, double best_attained)
      : NumericalError(what), best_attained_(best_attained) {}
  double best_attained() const noexcept { return best_attained_; }

 private:
  double best_attained_;
};

// Estimation failed, e.g. a singular information matrix.
class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace otrw
