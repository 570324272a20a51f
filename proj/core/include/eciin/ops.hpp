#pragma once

#include <cstddef>
#include <vector>

#include "eciin/autodiff.hpp"

// Differentiable array operations. Image tensors are N,C,H,W. Elementwise
// binary ops require identical shapes; use broadcast_axis to expand a
// singleton axis explicitly. The only implicit broadcast is the bias of
// conv2d and dense.
namespace eciin::ops {

using ad::Var;

Var conv2d(const Var& input, const Var& kernel, const Var& bias, int stride, int padding);
Var maxpool2d(const Var& input, int k, int stride);
Var global_average_pool(const Var& input);
Var dense(const Var& input, const Var& weight, const Var& bias);

/// Split-branch logistic, stable for any finite input.
Var sigmoid(const Var& x);
inline Var logistic(const Var& x) { return sigmoid(x); }
/// Logistic clamped to [eps, 1 - eps] so results stay strictly inside (0,1).
/// The gradient is zero wherever the clamp is active.
Var logistic_open(const Var& x, double eps);
Var relu(const Var& x);
Var exp(const Var& x);
/// Natural log; inputs must be > 0.
Var log(const Var& x);
Var square(const Var& x);
/// max(x, lo); gradient passes only where x > lo.
Var clamp_min(const Var& x, double lo);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

/// Sum over one axis, keeping it with extent 1.
Var sum_axis(const Var& x, std::size_t axis);
/// Sum of all elements, shape {1}.
Var sum_all(const Var& x);
Var mean_all(const Var& x);
/// Repeats a singleton axis n times.
Var broadcast_axis(const Var& x, std::size_t axis, std::size_t n);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);
Var concat(const std::vector<Var>& inputs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Softmax along an axis, computed from max-shifted exponentials.
Var softmax_axis(const Var& x, std::size_t axis);
Var log_softmax_axis(const Var& x, std::size_t axis);

// Array-level conveniences (no graph).
Array conv2d(const Array& input, const Array& kernel, const Array& bias, int stride, int padding);
Array maxpool2d(const Array& input, int k, int stride);
Array global_average_pool(const Array& input);
Array dense(const Array& input, const Array& weight, const Array& bias);
Array sigmoid(const Array& x);
Array relu(const Array& x);
Array concat(const std::vector<Array>& inputs, std::size_t axis);

}  // namespace eciin::ops
