#pragma once

#include <stdexcept>
#include <string>

namespace polypseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (stride 0, unknown variant, empty dataset...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input data violating a value contract (non-binary mask, label outside {0,1}).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Optimizer or scheduler state inconsistent with the model.
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace polypseg
