#pragma once

#include <stdexcept>
#include <string>

namespace pamm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument is outside its admissible range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, divergence, or other numeric failure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given input (e.g. zero reference norm).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// An object was used out of order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pamm
