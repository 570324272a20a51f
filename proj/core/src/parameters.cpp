#include "eciin/parameters.hpp"

#include <cmath>

#include "eciin/errors.hpp"

namespace eciin {

ad::Var ParameterSet::add(const std::string& name, Array init) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto v = ad::Var::parameter(std::move(init));
  entries_.emplace_back(name, v);
  return v;
}

const ad::Var& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw ConfigError("unknown parameter '" + name + "'");
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [n, v] : entries_) total += v.size();
  return total;
}

std::size_t ParameterSet::scalar_count_matching(const std::string& needle) const {
  std::size_t total = 0;
  for (const auto& [n, v] : entries_)
    if (n.find(needle) != std::string::npos) total += v.size();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

TensorMap ParameterSet::snapshot() const {
  TensorMap out;
  for (const auto& [n, v] : entries_) out.emplace(n, v.value());
  return out;
}

void ParameterSet::load(const TensorMap& tensors) {
  for (auto& [n, v] : entries_) {
    auto it = tensors.find(n);
    if (it == tensors.end()) throw DataError("checkpoint is missing parameter '" + n + "'");
    if (it->second.shape() != v.shape()) {
      throw DataError("parameter '" + n + "' has shape " + shape_str(it->second.shape()) + " in checkpoint, expected " +
                      shape_str(v.shape()));
    }
  }
  for (auto& [n, v] : entries_) v.mutable_value() = tensors.at(n);
}

std::size_t ParameterSet::import_prefixed(const TensorMap& tensors, const std::string& from_prefix,
                                          const std::string& to_prefix) {
  std::size_t imported = 0;
  for (const auto& [name, array] : tensors) {
    if (name.rfind(from_prefix, 0) != 0) continue;
    const std::string target = to_prefix + name.substr(from_prefix.size());
    if (!contains(target)) continue;
    ad::Var v = get(target);
    if (v.shape() != array.shape()) {
      throw DataError("import: '" + name + "' has shape " + shape_str(array.shape()) + ", target '" + target +
                      "' expects " + shape_str(v.shape()));
    }
    v.mutable_value() = array;
    ++imported;
  }
  return imported;
}

Array normal_array(Shape shape, double mean, double stddev, Rng& rng) {
  Array a(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : a.data()) v = dist(rng);
  return a;
}

Array he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  return normal_array(std::move(shape), 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Array uniform_array(Shape shape, double lo, double hi, Rng& rng) {
  Array a(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : a.data()) v = dist(rng);
  return a;
}

}  // namespace eciin
