#include "eciin/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eciin/errors.hpp"

namespace eciin {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ConfigError("array shape must have at least one axis");
  for (auto d : shape) {
    if (d == 0) throw ConfigError("array extent must be >= 1, got " + shape_str(shape));
  }
}
}  // namespace

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(numel(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (numel(shape_) != data_.size()) {
    throw ConfigError("array data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_str(shape_));
  }
}

std::size_t Array::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Array::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) {
    throw ConfigError("index rank " + std::to_string(idx.size()) + " vs shape " + shape_str(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw ConfigError("index out of range for shape " + shape_str(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Array::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Array::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

Array Array::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Array(std::move(shape), data_);
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Array& Array::operator+=(const Array& other) {
  if (other.shape_ != shape_) {
    throw ConfigError("cannot add " + shape_str(other.shape_) + " into " + shape_str(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Array& Array::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

bool same_shape(const Array& a, const Array& b) { return a.shape() == b.shape(); }

double max_abs_diff(const Array& a, const Array& b) {
  if (a.size() != b.size()) throw ConfigError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace eciin
