#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eciin {

/// Invalid shapes, hyperparameters or preset fields.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN/Inf appeared, or a value left the domain of an operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A recorded op produced NaN/Inf. Carries the op name and the first bad element.
class NonFiniteError : public NumericError {
 public:
  NonFiniteError(std::string op, std::vector<std::size_t> shape, std::size_t index)
      : NumericError("non-finite value produced by " + op + " at flat index " + std::to_string(index)),
        op_(std::move(op)),
        shape_(std::move(shape)),
        index_(index) {}
  const std::string& op() const { return op_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t index() const { return index_; }

 private:
  std::string op_;
  std::vector<std::size_t> shape_;
  std::size_t index_;
};

/// Non-finite intermediate inside EM routing.
class RoutingError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed manifest rows, unreadable images, bad archives.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eciin
