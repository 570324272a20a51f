#include "eciin/capsule.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "eciin/errors.hpp"

namespace eciin::caps {

using ad::Var;

void CapsuleTensor::validate() const {
  const Shape& p = poses.shape();
  const Shape& a = activations.shape();
  if (p.size() != 5 || p[4] != kPoseDim) throw ConfigError("capsules: poses must be [N,H,W,T,16], got " + shape_str(p));
  if (a.size() != 4 || a[0] != p[0] || a[1] != p[1] || a[2] != p[2] || a[3] != p[3]) {
    throw ConfigError("capsules: activations " + shape_str(a) + " do not match poses " + shape_str(p));
  }
}

void RoutingConfig::validate() const {
  if (iterations < 1) throw ConfigError("routing.iterations must be >= 1, got " + std::to_string(iterations));
  if (!(lambda_initial > 0.0)) throw ConfigError("routing.lambda_initial must be > 0");
  if (!(lambda_growth > 0.0)) throw ConfigError("routing.lambda_growth must be > 0");
  if (!(variance_floor > 0.0)) throw ConfigError("routing.variance_floor must be > 0");
  if (!(activation_eps > 0.0 && activation_eps < 0.5)) throw ConfigError("routing.activation_eps must be in (0, 0.5)");
}

std::size_t capsule_output_extent(std::size_t extent, int k, int stride) {
  if (k < 1 || stride < 1) throw ConfigError("capsule window: k and stride must be >= 1");
  if (extent < static_cast<std::size_t>(k)) {
    throw ConfigError("capsule window: spatial extent " + std::to_string(extent) + " is smaller than kernel " +
                      std::to_string(k));
  }
  return (extent - static_cast<std::size_t>(k)) / static_cast<std::size_t>(stride) + 1;
}

namespace {

// Names the (sample, output capsule) of a routing intermediate. Intermediates
// are laid out as [B, I|1, J, H], [B, I|1, J] or [B, J].
std::string locate(const NonFiniteError& e) {
  const Shape& s = e.shape();
  std::vector<std::size_t> idx(s.size());
  std::size_t rem = e.index();
  for (std::size_t a = s.size(); a-- > 0;) {
    idx[a] = rem % s[a];
    rem /= s[a];
  }
  std::ostringstream os;
  os << "sample " << idx[0];
  if (s.size() >= 3) {
    os << ", input capsule " << idx[1] << ", output capsule " << idx[2];
  } else if (s.size() == 2) {
    os << ", output capsule " << idx[1];
  }
  return os.str();
}

}  // namespace

RoutingResult em_routing(const Var& votes, const Var& input_activations, const Var& beta_a, const Var& beta_u,
                         const RoutingConfig& cfg, RoutingTrace* trace) {
  cfg.validate();
  const Shape& vs = votes.shape();
  if (vs.size() != 4 || vs[3] != kPoseDim) throw ConfigError("em_routing: votes must be [B,I,J,16], got " + shape_str(vs));
  const std::size_t b = vs[0], ni = vs[1], nj = vs[2], h = vs[3];
  if (input_activations.shape() != Shape{b, ni}) {
    throw ConfigError("em_routing: input activations " + shape_str(input_activations.shape()) + " must be [" +
                      std::to_string(b) + "," + std::to_string(ni) + "]");
  }
  if (beta_a.shape() != Shape{nj} || beta_u.shape() != Shape{nj}) {
    throw ConfigError("em_routing: beta_a/beta_u must be [" + std::to_string(nj) + "]");
  }
  if (!votes.value().all_finite()) throw RoutingError("em_routing: votes are not finite");

  const double log_2pi = std::log(2.0 * std::numbers::pi);
  Var r = Var::constant(Array({b, ni, nj}, 1.0 / static_cast<double>(nj)));
  if (trace) {
    *trace = RoutingTrace{};
    trace->initial_assignments = r.value();
  }

  Var a_in = ops::broadcast_axis(ops::reshape(input_activations, {b, ni, 1}), 2, nj);
  Var beta_a_b = ops::broadcast_axis(ops::reshape(beta_a, {1, nj}), 0, b);
  Var beta_u_b = ops::broadcast_axis(ops::reshape(beta_u, {1, nj}), 0, b);

  Var mu, act;
  for (int t = 0; t < cfg.iterations; ++t) {
    try {
      // M-step
      Var rw = cfg.scale_by_input_activation ? ops::mul(r, a_in) : r;                   // [B,I,J]
      Var mass = ops::clamp_min(ops::sum_axis(rw, 1), 1e-300);                          // [B,1,J]
      // Normalized weights make a single contributing vote reproduce itself exactly.
      Var coeff = ops::div(rw, ops::broadcast_axis(mass, 1, ni));                       // [B,I,J]
      Var coeff4 = ops::broadcast_axis(ops::reshape(coeff, {b, ni, nj, 1}), 3, h);      // [B,I,J,H]
      Var mass4 = ops::broadcast_axis(ops::reshape(mass, {b, 1, nj, 1}), 3, h);         // [B,1,J,H]
      mu = ops::sum_axis(ops::mul(coeff4, votes), 1);                                   // [B,1,J,H]
      Var diff2 = ops::square(ops::sub(votes, ops::broadcast_axis(mu, 1, ni)));         // [B,I,J,H]
      Var var = ops::add_scalar(ops::sum_axis(ops::mul(coeff4, diff2), 1), cfg.variance_floor);
      Var log_norm = ops::broadcast_axis(ops::scale(ops::add_scalar(ops::log(var), log_2pi), 0.5), 1, ni);
      Var log_p = ops::sub(ops::scale(ops::div(diff2, ops::broadcast_axis(var, 1, ni)), -0.5), log_norm);
      // cost_j^h = -sum_i r_ij ln p = -mass_j sum_i coeff_ij ln p
      Var cost = ops::scale(ops::mul(mass4, ops::sum_axis(ops::mul(coeff4, log_p), 1)), -1.0);  // [B,1,J,H]
      Var cost_total = ops::reshape(ops::sum_axis(cost, 3), {b, nj});
      Var mass2 = ops::reshape(mass, {b, nj});
      const double lambda = cfg.lambda_at(t);
      Var z = ops::scale(ops::sub(ops::sub(beta_a_b, ops::mul(beta_u_b, mass2)), cost_total), lambda);
      act = ops::logistic_open(z, cfg.activation_eps);                                   // [B,J]
      if (trace) {
        trace->activations.push_back(act.value());
        trace->lambdas.push_back(lambda);
      }
      if (t + 1 == cfg.iterations) break;

      // E-step
      Var log_p_sum = ops::reshape(ops::sum_axis(log_p, 3), {b, ni, nj});
      Var log_a = ops::broadcast_axis(ops::reshape(ops::log(act), {b, 1, nj}), 1, ni);
      r = ops::softmax_axis(ops::add(log_p_sum, log_a), 2);
      if (trace) trace->assignments.push_back(r.value());
    } catch (const NonFiniteError& e) {
      throw RoutingError("em_routing: non-finite " + e.op() + " in iteration " + std::to_string(t + 1) + " at " +
                         locate(e));
    }
  }
  return {ops::reshape(mu, {b, nj, h}), act};
}

Var compute_votes(const Var& poses, const Var& transforms) {
  const Shape& ps = poses.shape();
  const Shape& ws = transforms.shape();
  const bool p_ok = (ps.size() == 3 && ps[2] == 16) || (ps.size() == 4 && ps[2] == 4 && ps[3] == 4);
  const bool w_ok = (ws.size() == 3 && ws[2] == 16) || (ws.size() == 4 && ws[2] == 4 && ws[3] == 4);
  if (!p_ok || !w_ok || ps[1] != ws[0]) {
    throw ConfigError("compute_votes: poses " + shape_str(ps) + " and transforms " + shape_str(ws) +
                      " must be [B,I,4,4] and [I,J,4,4]");
  }
  const std::size_t b = ps[0], ni = ps[1], nj = ws[1];
  Array out({b, ni, nj, 16}, 0.0);
  const double* m = poses.value().data().data();
  const double* w = transforms.value().data().data();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t i = 0; i < ni; ++i) {
      const double* mi = m + (bi * ni + i) * 16;
      for (std::size_t j = 0; j < nj; ++j) {
        const double* wij = w + (i * nj + j) * 16;
        double* v = out.data().data() + ((bi * ni + i) * nj + j) * 16;
        for (int r = 0; r < 4; ++r)
          for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += mi[r * 4 + k] * wij[k * 4 + c];
            v[r * 4 + c] = s;
          }
      }
    }
  return ad::make_op("compute_votes", std::move(out), {poses, transforms}, [b, ni, nj](ad::Node& self) {
    const double* m = self.parents[0]->value.data().data();
    const double* w = self.parents[1]->value.data().data();
    const double* g = self.grad.data().data();
    double* gm = self.parents[0]->requires_grad ? self.parents[0]->grad_buffer().data().data() : nullptr;
    double* gw = self.parents[1]->requires_grad ? self.parents[1]->grad_buffer().data().data() : nullptr;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t i = 0; i < ni; ++i) {
        const double* mi = m + (bi * ni + i) * 16;
        for (std::size_t j = 0; j < nj; ++j) {
          const double* wij = w + (i * nj + j) * 16;
          const double* gv = g + ((bi * ni + i) * nj + j) * 16;
          if (gm) {
            // dM = dV W^T
            double* d = gm + (bi * ni + i) * 16;
            for (int r = 0; r < 4; ++r)
              for (int k = 0; k < 4; ++k) {
                double s = 0.0;
                for (int c = 0; c < 4; ++c) s += gv[r * 4 + c] * wij[k * 4 + c];
                d[r * 4 + k] += s;
              }
          }
          if (gw) {
            // dW = M^T dV
            double* d = gw + (i * nj + j) * 16;
            for (int k = 0; k < 4; ++k)
              for (int c = 0; c < 4; ++c) {
                double s = 0.0;
                for (int r = 0; r < 4; ++r) s += mi[r * 4 + k] * gv[r * 4 + c];
                d[k * 4 + c] += s;
              }
          }
        }
      }
  });
}

Var unfold_windows(const Var& x, int k, int stride) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ConfigError("unfold_windows: input must be [N,H,W,T,D], got " + shape_str(s));
  const std::size_t n = s[0], hh = s[1], ww = s[2], t = s[3], d = s[4];
  const std::size_t ho = capsule_output_extent(hh, k, stride);
  const std::size_t wo = capsule_output_extent(ww, k, stride);
  const std::size_t ku = static_cast<std::size_t>(k), su = static_cast<std::size_t>(stride);
  const std::size_t members = ku * ku * t;
  std::vector<std::size_t> src(n * ho * wo * members);
  std::size_t o = 0;
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox)
        for (std::size_t dy = 0; dy < ku; ++dy)
          for (std::size_t dx = 0; dx < ku; ++dx)
            for (std::size_t ti = 0; ti < t; ++ti)
              src[o++] = ((ni * hh + oy * su + dy) * ww + ox * su + dx) * t + ti;
  Array out({n * ho * wo, members, d});
  const double* xd = x.value().data().data();
  for (std::size_t m = 0; m < src.size(); ++m)
    std::copy(xd + src[m] * d, xd + (src[m] + 1) * d, out.data().data() + m * d);
  return ad::make_op("unfold_windows", std::move(out), {x}, [src = std::move(src), d](ad::Node& self) {
    if (!self.parents[0]->requires_grad) return;
    double* g = self.parents[0]->grad_buffer().data().data();
    for (std::size_t m = 0; m < src.size(); ++m)
      for (std::size_t e = 0; e < d; ++e) g[src[m] * d + e] += self.grad[m * d + e];
  });
}

CapsuleTensor concat_types(const CapsuleTensor& a, const CapsuleTensor& b) {
  a.validate();
  b.validate();
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ConfigError("concat_types: capsule grids differ: " + shape_str(a.poses.shape()) + " vs " +
                      shape_str(b.poses.shape()));
  }
  return {ops::concat({a.poses, b.poses}, 3), ops::concat({a.activations, b.activations}, 3)};
}

PrimaryCapsules::PrimaryCapsules(int in_channels, int n_p, ParameterSet& params, const std::string& prefix, Rng& rng) {
  if (n_p < 16 || n_p % 16 != 0) {
    throw ConfigError("primary capsules: n_p = " + std::to_string(n_p) + " is not a positive multiple of 16");
  }
  if (in_channels < 1) throw ConfigError("primary capsules: in_channels must be >= 1");
  types_ = n_p / 16;
  const auto c = static_cast<std::size_t>(in_channels);
  pose_weight_ = params.add(prefix + "pose.weight", he_normal({static_cast<std::size_t>(n_p), c, 1, 1}, c, rng));
  pose_bias_ = params.add(prefix + "pose.bias", Array({static_cast<std::size_t>(n_p)}, 0.0));
  act_weight_ = params.add(prefix + "act.weight", he_normal({static_cast<std::size_t>(types_), c, 1, 1}, c, rng));
  act_bias_ = params.add(prefix + "act.bias", Array({static_cast<std::size_t>(types_)}, 0.0));
}

CapsuleTensor PrimaryCapsules::forward(const Var& features) const {
  const Shape& s = features.shape();
  if (s.size() != 4 || s[1] != pose_weight_.shape()[1]) {
    throw ConfigError("primary capsules: features " + shape_str(s) + " do not match " +
                      std::to_string(pose_weight_.shape()[1]) + " input channels");
  }
  const std::size_t n = s[0], h = s[2], w = s[3], t = static_cast<std::size_t>(types_);
  Var pose = ops::conv2d(features, pose_weight_, pose_bias_, 1, 0);                   // [N, T*16, h, w]
  pose = ops::permute(ops::reshape(pose, {n, t, 16, h, w}), {0, 3, 4, 1, 2});         // [N, h, w, T, 16]
  Var act = ops::logistic_open(ops::conv2d(features, act_weight_, act_bias_, 1, 0), 1e-12);  // [N, T, h, w]
  act = ops::permute(act, {0, 2, 3, 1});
  return {pose, act};
}

ConvCapsules::ConvCapsules(int in_types, int out_types, int k, int stride, ParameterSet& params,
                           const std::string& prefix, Rng& rng)
    : in_types_(in_types), out_types_(out_types), k_(k), stride_(stride) {
  if (in_types < 1 || out_types < 1) throw ConfigError("conv capsules: capsule type counts must be >= 1");
  if (k < 1 || stride < 1) throw ConfigError("conv capsules: k and stride must be >= 1");
  const auto members = static_cast<std::size_t>(k * k * in_types);
  const auto j = static_cast<std::size_t>(out_types);
  transforms_ = params.add(prefix + "transforms", normal_array({members, j, 16}, 0.0, 0.5, rng));
  beta_a_ = params.add(prefix + "beta_a", Array({j}, 0.0));
  beta_u_ = params.add(prefix + "beta_u", Array({j}, 0.0));
}

CapsuleTensor ConvCapsules::forward(const CapsuleTensor& input, const RoutingConfig& cfg) const {
  input.validate();
  if (input.types() != static_cast<std::size_t>(in_types_)) {
    throw ConfigError("conv capsules: expected " + std::to_string(in_types_) + " input types, got " +
                      std::to_string(input.types()));
  }
  const std::size_t n = input.batch();
  const std::size_t ho = capsule_output_extent(input.height(), k_, stride_);
  const std::size_t wo = capsule_output_extent(input.width(), k_, stride_);
  const std::size_t members = static_cast<std::size_t>(k_ * k_ * in_types_);
  const auto j = static_cast<std::size_t>(out_types_);

  Var poses = unfold_windows(input.poses, k_, stride_);  // [N*L, members, 16]
  Var acts = ops::reshape(
      unfold_windows(ops::reshape(input.activations, {n, input.height(), input.width(), input.types(), 1}), k_, stride_),
      {n * ho * wo, members});
  Var votes = compute_votes(poses, transforms_);
  RoutingResult routed = em_routing(votes, acts, beta_a_, beta_u_, cfg);
  return {ops::reshape(routed.poses, {n, ho, wo, j, 16}), ops::reshape(routed.activations, {n, ho, wo, j})};
}

ClassCapsules::ClassCapsules(int in_capsules, int n_classes, ParameterSet& params, const std::string& prefix,
                             Rng& rng)
    : in_capsules_(in_capsules) {
  if (n_classes < 2) throw ConfigError("class capsules: need at least 2 classes, got " + std::to_string(n_classes));
  layer_ = ConvCapsules(in_capsules, n_classes, 1, 1, params, prefix, rng);
}

ClassCapsuleOutput ClassCapsules::forward(const CapsuleTensor& input, const RoutingConfig& cfg) const {
  input.validate();
  const std::size_t n = input.batch();
  const std::size_t flat = input.height() * input.width() * input.types();
  if (flat != static_cast<std::size_t>(in_capsules_)) {
    throw ConfigError("class capsules: expected " + std::to_string(in_capsules_) + " input capsules, got " +
                      std::to_string(flat));
  }
  CapsuleTensor flattened{ops::reshape(input.poses, {n, 1, 1, flat, 16}),
                          ops::reshape(input.activations, {n, 1, 1, flat})};
  CapsuleTensor out = layer_.forward(flattened, cfg);
  const auto j = static_cast<std::size_t>(layer_.out_types());
  return {ops::reshape(out.activations, {n, j}), ops::reshape(out.poses, {n, j, 16})};
}

}  // namespace eciin::caps
