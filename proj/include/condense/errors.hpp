#pragma once

#include <stdexcept>
#include <string>

namespace condense {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed, or training diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (CSV, variable specs, labels, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid model structure or an operation the model does not support.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Bad command line or configuration value.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace condense
