#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace atomtrap {

// Base for everything the library throws. The CLI maps the three branches
// below onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, out-of-range config values, empty streams.
class DataError : public Error {
 public:
  using Error::Error;
};

// Parse failure with a source location. line/record index is 1-based; 0
// means "not applicable" (e.g. binary header).
class ParseError : public DataError {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : DataError(format(source, line, what)), source_(std::move(source)), line_(line) {}

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& source, std::size_t line, const std::string& what) {
    std::string s = source.empty() ? std::string("<input>") : source;
    if (line > 0) s += ":" + std::to_string(line);
    return s + ": " + what;
  }

  std::string source_;
  std::size_t line_;
};

// Precondition violated on a numeric argument (negative power, wavelength
// blue of the D lines, detection efficiency > 1, ...).
class DomainError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyStreamError : public DataError {
 public:
  using DataError::DataError;
};

// The numerics failed: step-size underflow, degenerate steady state, fit
// non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public NumericalError {
 public:
  IntegrationError(double time, const std::string& what)
      : NumericalError(what + " at t = " + std::to_string(time) + " s"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class DegenerateSteadyStateError : public NumericalError {
 public:
  DegenerateSteadyStateError(int nullity, const std::string& what)
      : NumericalError(what), nullity_(nullity) {}
  int nullity() const { return nullity_; }

 private:
  int nullity_;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace atomtrap
