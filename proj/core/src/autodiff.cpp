#include "eciin/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "eciin/errors.hpp"

namespace eciin::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Array& Node::grad_buffer() {
  if (grad.empty()) grad = Array(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var Var::parameter(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return Var(std::move(node));
}

Array Var::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Array(node_->value.shape(), 0.0);
}

void Var::zero_grad() { node_->grad = Array(); }

Array& Var::mutable_value() {
  if (!node_->parents.empty()) throw ConfigError("mutable_value() on a non-leaf node (" + node_->op + ")");
  return node_->value;
}

Var make_op(std::string op, Array value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i])) throw NonFiniteError(op, value.shape(), i);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = std::move(op);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root) throw ConfigError("backward on an empty Var");
  if (root.size() != 1) throw ConfigError("backward root must have one element, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

}  // namespace eciin::ad
