#pragma once

#include <stdexcept>
#include <string>

namespace mfdag {

/// Inconsistent dimensions between two inputs.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Bad user input (config keys, malformed files, invalid values).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear algebra or optimizer breakdown: singular systems, NaN gradients.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure: unreadable input or unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfdag
