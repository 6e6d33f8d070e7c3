#pragma once

#include <stdexcept>
#include <string>

namespace saber {

// Base for every failure raised by the library. Subclasses let callers
// (mostly the CLI) map failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file, bad field, dimension mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition (zero-norm vector, n > |DL|, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Invalid configuration key or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: NaN in attention, diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Scorer-side failures. `retriable()` is true only for transport problems.
class ScorerError : public Error {
 public:
  ScorerError(const std::string& what, bool retriable)
      : Error(what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

}  // namespace saber
