#pragma once

#include <stdexcept>
#include <string>

namespace x3d {

/// Count or capacity violation (k > N, m > N, ...).
class SizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Matrix/vector dimensions do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Object used in a state that does not allow the call (e.g. a consumed tape).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad user configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values in a numerical routine. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace x3d
