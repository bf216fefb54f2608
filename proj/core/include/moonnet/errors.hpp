#pragma once

#include <stdexcept>
#include <string>

namespace moonnet {

/// Tensor shapes that do not fit an operator's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid experiment, design, or CLI configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Finite-difference oracle could not produce a usable value.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed annotation or image file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace moonnet
