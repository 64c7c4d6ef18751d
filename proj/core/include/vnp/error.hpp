#pragma once

#include <stdexcept>
#include <string>

namespace vnp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform for an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced, Cholesky failure, non-positive variance.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or inconsistent model/variant specification.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or corrupted file (task files, checkpoints, reports).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace vnp
