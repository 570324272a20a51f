#include "eciin/loss.hpp"

#include <algorithm>
#include <cmath>

#include "eciin/errors.hpp"

namespace eciin::train {

namespace {
void check_targets(const Shape& s, const std::vector<int>& targets, const char* op) {
  if (s.size() != 2) throw ConfigError(std::string(op) + ": expected [N,K], got " + shape_str(s));
  if (targets.size() != s[0]) {
    throw ConfigError(std::string(op) + ": " + std::to_string(targets.size()) + " targets for batch of " +
                      std::to_string(s[0]));
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= s[1]) {
      throw ConfigError(std::string(op) + ": target " + std::to_string(t) + " out of range");
    }
  }
}
}  // namespace

ad::Var spread_loss(const ad::Var& activations, const std::vector<int>& targets, double margin) {
  const Shape& s = activations.shape();
  check_targets(s, targets, "spread_loss");
  const std::size_t n = s[0], k = s[1];
  const Array& a = activations.value();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<std::size_t>(targets[i]);
    for (std::size_t p = 0; p < k; ++p) {
      if (p == t) continue;
      const double gap = std::max(0.0, margin - (a[i * k + t] - a[i * k + p]));
      total += gap * gap;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return ad::make_op("spread_loss", Array::scalar(total * inv_n), {activations},
                     [targets, margin, n, k, inv_n](ad::Node& self) {
                       if (!self.parents[0]->requires_grad) return;
                       const Array& a = self.parents[0]->value;
                       Array& g = self.parents[0]->grad_buffer();
                       const double up = self.grad[0] * inv_n;
                       for (std::size_t i = 0; i < n; ++i) {
                         const auto t = static_cast<std::size_t>(targets[i]);
                         for (std::size_t p = 0; p < k; ++p) {
                           if (p == t) continue;
                           const double gap = margin - (a[i * k + t] - a[i * k + p]);
                           if (gap <= 0.0) continue;
                           g[i * k + t] -= 2.0 * gap * up;
                           g[i * k + p] += 2.0 * gap * up;
                         }
                       }
                     });
}

double spread_loss(const Array& activations, int target, double margin) {
  return spread_loss(ad::Var::constant(activations.reshaped({1, activations.size()})), {target}, margin).value()[0];
}

ad::Var cross_entropy(const ad::Var& logits, const std::vector<int>& targets) {
  const Shape& s = logits.shape();
  check_targets(s, targets, "cross_entropy");
  const std::size_t n = s[0], k = s[1];
  const Array& z = logits.value();
  Array probs({n, k});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = z[i * k];
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, z[i * k + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) sum += std::exp(z[i * k + c] - mx);
    for (std::size_t c = 0; c < k; ++c) probs[i * k + c] = std::exp(z[i * k + c] - mx) / sum;
    total -= z[i * k + static_cast<std::size_t>(targets[i])] - mx - std::log(sum);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return ad::make_op("cross_entropy", Array::scalar(total * inv_n), {logits},
                     [targets, probs = std::move(probs), n, k, inv_n](ad::Node& self) {
                       if (!self.parents[0]->requires_grad) return;
                       Array& g = self.parents[0]->grad_buffer();
                       const double up = self.grad[0] * inv_n;
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t c = 0; c < k; ++c) {
                           const double onehot = static_cast<std::size_t>(targets[i]) == c ? 1.0 : 0.0;
                           g[i * k + c] += (probs[i * k + c] - onehot) * up;
                         }
                     });
}

double margin_schedule(long step, long total_steps, double start, double end) {
  if (total_steps <= 0) return end;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return std::lerp(start, end, frac);  // exact at both ends
}

}  // namespace eciin::train
