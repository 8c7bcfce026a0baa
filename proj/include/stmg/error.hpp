#pragma once

#include <stdexcept>
#include <string>

namespace stmg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between operands or parameters.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A map, neighborhood or covariance that makes an operation undefined
/// (constant map, fully masked softmax row, singular covariance, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Index or node outside the valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk container. `offset` is the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became NaN or infinite during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace stmg
