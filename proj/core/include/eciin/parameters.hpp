#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eciin/autodiff.hpp"
#include "eciin/checkpoint.hpp"

namespace eciin {

/// Named trainable leaves in registration order.
class ParameterSet {
 public:
  ad::Var add(const std::string& name, Array init);
  const ad::Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, ad::Var>>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  /// Scalar count of parameters whose name contains `needle`.
  std::size_t scalar_count_matching(const std::string& needle) const;

  void zero_grad();
  TensorMap snapshot() const;
  /// Overwrites every parameter from `tensors`; all must be present with matching shapes.
  void load(const TensorMap& tensors);
  /// Copies entries whose name starts with `from_prefix` into parameters named
  /// `to_prefix + rest`. Shapes must match. Returns the number imported.
  std::size_t import_prefixed(const TensorMap& tensors, const std::string& from_prefix,
                              const std::string& to_prefix);

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

using Rng = std::mt19937_64;

/// Zero-mean normal initialization with standard deviation sqrt(2 / fan_in).
Array he_normal(Shape shape, std::size_t fan_in, Rng& rng);
Array normal_array(Shape shape, double mean, double stddev, Rng& rng);
Array uniform_array(Shape shape, double lo, double hi, Rng& rng);

}  // namespace eciin
