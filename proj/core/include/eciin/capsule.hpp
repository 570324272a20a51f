#pragma once

#include <string>
#include <vector>

#include "eciin/ops.hpp"
#include "eciin/parameters.hpp"

namespace eciin::caps {

inline constexpr std::size_t kPoseDim = 16;  // vectorized 4x4 pose matrix

/// Grid of capsules per sample: a 4x4 pose and an activation in (0,1).
struct CapsuleTensor {
  ad::Var poses;        // [N, H, W, T, 16]
  ad::Var activations;  // [N, H, W, T]

  std::size_t batch() const { return poses.shape()[0]; }
  std::size_t height() const { return poses.shape()[1]; }
  std::size_t width() const { return poses.shape()[2]; }
  std::size_t types() const { return poses.shape()[3]; }
  void validate() const;
};

struct RoutingConfig {
  int iterations = 3;
  double lambda_initial = 1.0;
  double lambda_growth = 1.0;  // lambda_t = lambda_initial * (1 + lambda_growth * t)
  double variance_floor = 1e-6;
  /// M-step weights are r_ij * a_i when set, r_ij alone otherwise.
  bool scale_by_input_activation = true;
  /// Output activations are clamped to [eps, 1 - eps].
  double activation_eps = 1e-12;

  double lambda_at(int iteration) const { return lambda_initial * (1.0 + lambda_growth * iteration); }
  void validate() const;
};

/// Per-call record of the assignment weights, for inspection in tests and tools.
struct RoutingTrace {
  Array initial_assignments;          // [B, I, J], before the first M-step
  std::vector<Array> assignments;     // after each E-step
  std::vector<Array> activations;     // after each M-step, [B, J]
  std::vector<double> lambdas;        // inverse temperature used at each M-step
};

struct RoutingResult {
  ad::Var poses;        // [B, J, 16]
  ad::Var activations;  // [B, J]
};

/// EM routing-by-agreement. votes [B, I, J, 16], input_activations [B, I],
/// beta_a and beta_u [J]. Assignments start uniform; each round runs an
/// M-step (weighted Gaussian fit per pose dimension and the MDL activation
/// a_j = logistic(lambda (beta_a - beta_u sum_i r_ij - sum_h cost_j^h)),
/// cost_j^h = -sum_i r_ij ln p_{i|j}^h) and, except after the last round,
/// an E-step r_ij proportional to a_j p_{i|j}. Throws RoutingError on NaN/Inf.
RoutingResult em_routing(const ad::Var& votes, const ad::Var& input_activations, const ad::Var& beta_a,
                         const ad::Var& beta_u, const RoutingConfig& cfg, RoutingTrace* trace = nullptr);

/// V_ij = M_i W_ij. poses [B, I, 16] (or [B, I, 4, 4]), transforms [I, J, 16]
/// (or [I, J, 4, 4]) -> votes [B, I, J, 16].
ad::Var compute_votes(const ad::Var& poses, const ad::Var& transforms);

/// Gathers k x k windows: [N, H, W, T, D] -> [N * Ho * Wo, k * k * T, D] with
/// window member index (dy * k + dx) * T + t and no padding.
ad::Var unfold_windows(const ad::Var& x, int k, int stride);

/// Concatenates capsule types of two tensors on the same grid.
CapsuleTensor concat_types(const CapsuleTensor& a, const CapsuleTensor& b);

/// n_p 1x1 convolutions give the poses; a 1x1 convolution per type followed
/// by the logistic gives the activations. n_p must be divisible by 16.
class PrimaryCapsules {
 public:
  PrimaryCapsules() = default;
  PrimaryCapsules(int in_channels, int n_p, ParameterSet& params, const std::string& prefix, Rng& rng);
  /// features [N, C, h, w] -> capsules [N, h, w, n_p / 16]
  CapsuleTensor forward(const ad::Var& features) const;
  int types() const { return types_; }

 private:
  int types_ = 0;
  ad::Var pose_weight_, pose_bias_, act_weight_, act_bias_;
};

/// Convolutional capsule layer: every output location routes the capsules
/// of its k x k input window into `out_types` capsules. Transformation
/// matrices are shared across locations.
class ConvCapsules {
 public:
  ConvCapsules() = default;
  ConvCapsules(int in_types, int out_types, int k, int stride, ParameterSet& params, const std::string& prefix,
               Rng& rng);
  CapsuleTensor forward(const CapsuleTensor& input, const RoutingConfig& cfg) const;

  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int out_types() const { return out_types_; }
  const ad::Var& transforms() const { return transforms_; }
  const ad::Var& beta_a() const { return beta_a_; }
  const ad::Var& beta_u() const { return beta_u_; }

 private:
  int in_types_ = 0, out_types_ = 0, k_ = 1, stride_ = 1;
  ad::Var transforms_;  // [k * k * in_types, out_types, 16]
  ad::Var beta_a_, beta_u_;
};

struct ClassCapsuleOutput {
  ad::Var activations;  // [N, n_classes]
  ad::Var poses;        // [N, n_classes, 16]
};

/// Routes every input capsule (flattened over space and type) into
/// `n_classes` class capsules.
class ClassCapsules {
 public:
  ClassCapsules() = default;
  ClassCapsules(int in_capsules, int n_classes, ParameterSet& params, const std::string& prefix, Rng& rng);
  ClassCapsuleOutput forward(const CapsuleTensor& input, const RoutingConfig& cfg) const;
  const ConvCapsules& layer() const { return layer_; }

 private:
  int in_capsules_ = 0;
  ConvCapsules layer_;
};

/// Spatial output extent of a no-padding window of size k.
std::size_t capsule_output_extent(std::size_t extent, int k, int stride);

}  // namespace eciin::caps
