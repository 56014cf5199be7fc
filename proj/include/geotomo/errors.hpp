#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace geotomo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: malformed expressions, inconsistent sizes, bad configs.
class InputError : public Error {
 public:
  using Error::Error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t position)
      : InputError(what + " (at offset " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A point was requested outside the chart domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The metric failed to be symmetric positive definite.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// A tangent vector expected to be g-unit was not.
class NormalizationError : public Error {
 public:
  using Error::Error;
};

/// A geodesic left the chart before the requested flow time.
class ExitError : public Error {
 public:
  ExitError(const std::string& what, double exit_time) : Error(what), exit_time_(exit_time) {}
  double exit_time() const noexcept { return exit_time_; }

 private:
  double exit_time_;
};

/// No boundary crossing within the configured maximal time.
class TrappedGeodesicError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failure; carries the residual history.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace geotomo
