#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wmlmc {

/// Invalid user-facing configuration (bad level, intensity too large for the
/// finest grid, unknown schedule regime, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller broke a documented precondition (shape mismatch, inverted thresholds).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A path produced a non-finite state.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// log of a nonpositive state inside a path functional.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, std::size_t index)
      : std::domain_error(what + " (grid index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Iterative solver ran out of budget.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace wmlmc
