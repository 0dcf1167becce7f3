#pragma once

#include <stdexcept>
#include <string>

namespace depflux {

/// A model definition violates the constraints of its family (bad parameters,
/// rates that break monotonicity, degenerate theta range, ...).
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation was called outside its documented domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical procedure did not reach its tolerance (tail growth, quadrature,
/// uniformization, bisection).
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was found broken. Reaching this is a bug.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace depflux
