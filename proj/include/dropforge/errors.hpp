#pragma once

#include <stdexcept>
#include <string>

namespace dropforge {

// Every error raised by the library derives from Error so callers can catch
// broadly; the CLI maps the concrete kinds onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value or combination of values is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where finite input is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An API was called in a way its contract forbids.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Data failed a domain invariant (non-binary mask, etc.).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or parsed. The message names the path.
class LoadError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dropforge
