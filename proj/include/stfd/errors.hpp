#pragma once

#include <stdexcept>
#include <string>

namespace stfd {

// Root of every error this library throws. Each subclass maps to one failure
// family so callers (the CLI in particular) can pick an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed file header, bad magic, truncated binary payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Well-formed input whose values violate a domain invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown configuration keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API called out of order (backward on a non-scalar, push after close, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Training diverged.
class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace stfd
