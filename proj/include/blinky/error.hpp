#pragma once

#include <stdexcept>
#include <string>

namespace blinky {

// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or input geometry (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown during an algorithm (CLI exit code 3).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// File system or format failure; the message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace blinky
