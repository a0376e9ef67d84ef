#pragma once

#include <stdexcept>
#include <string>

namespace cefopt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or field (schema level).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that breaks a domain rule.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Model construction misuse (unknown handle, malformed term, ...).
class BuilderError : public Error {
 public:
  using Error::Error;
};

/// A requested formulation is outside what the helper can model exactly.
class ModelingError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: singular systems, NaN loss, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The nodal intensity system stays singular after bus elimination.
class DegenerateTopology : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An optimization model has no feasible point.
class InfeasibleModel : public Error {
 public:
  using Error::Error;
};

}  // namespace cefopt
