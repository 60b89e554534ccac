#pragma once

#include <stdexcept>
#include <string>

namespace fastface {

// Invalid configuration or malformed arguments (shape, range, missing slot).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or numerically impossible states.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File access or format failures.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fastface
