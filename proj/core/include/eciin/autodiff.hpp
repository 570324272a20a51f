#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "eciin/array.hpp"

namespace eciin::ad {

/// One recorded value in a define-by-run computation graph.
struct Node {
  Array value;
  Array grad;  // materialized on first accumulation
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Allocates a zero gradient if none exists yet and returns it.
  Array& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Array value);
  /// Leaf whose gradient accumulates across backward passes until zero_grad().
  static Var parameter(Array value);

  const Array& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient of the last backward pass; zeros of the value's shape if none flowed here.
  Array grad() const;
  void zero_grad();

  /// Parameter update access. Only valid for leaves.
  Array& mutable_value();

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Records an op result. Parents are dropped when none of them requires a
/// gradient or recording is disabled. The value must be finite.
Var make_op(std::string op, Array value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

/// Reverse sweep from a single-element root. Gradients are summed into every
/// reachable node; each node runs its backward rule once.
void backward(const Var& root);

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace eciin::ad
