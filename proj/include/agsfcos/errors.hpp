#pragma once

#include <stdexcept>
#include <string>

namespace agsfcos {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not satisfy an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed, or a value outside a function's domain.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse (e.g. backward on a non-scalar).
class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid user data: degenerate boxes, bad targets, out-of-range labels.
class InputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Cross-record consistency failure (dangling ids, duplicates).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint does not match the model it is loaded into.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace agsfcos
