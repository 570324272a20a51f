#pragma once

#include <vector>

#include "eciin/autodiff.hpp"

namespace eciin::train {

/// Batch mean of sum_{p != t} max(0, m - (a_t - a_p))^2 over activations [N, K].
ad::Var spread_loss(const ad::Var& activations, const std::vector<int>& targets, double margin);
/// Single-sample form over activations [K].
double spread_loss(const Array& activations, int target, double margin);

/// Batch mean of -log softmax(logits)[t] over logits [N, K].
ad::Var cross_entropy(const ad::Var& logits, const std::vector<int>& targets);

/// Linear ramp from `start` at step 0 to `end` at `total_steps`, clamped.
/// A zero-length schedule returns `end`.
double margin_schedule(long step, long total_steps, double start = 0.2, double end = 0.9);

}  // namespace eciin::train
