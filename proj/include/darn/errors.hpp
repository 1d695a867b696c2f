#pragma once

#include <stdexcept>
#include <string>

namespace darn {

// Base of every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or image dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, division below the floor, degenerate predictions.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Missing files, malformed PNGs, bad manifests, impossible crops.
class DataError : public Error {
 public:
  using Error::Error;
};

// Unknown keys, type mismatches and constraint violations in configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace darn
