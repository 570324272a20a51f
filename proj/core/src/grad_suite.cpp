#include "eciin/grad_suite.hpp"

#include <functional>
#include <random>

#include "eciin/capsule.hpp"
#include "eciin/dataset.hpp"
#include "eciin/loss.hpp"
#include "eciin/model.hpp"
#include "eciin/ops.hpp"

namespace eciin {

namespace {

using ad::Var;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Var param(Shape s, double lo = -1.0, double hi = 1.0) { return Var::parameter(uniform_array(std::move(s), lo, hi, rng_)); }

  // Weighted sum so each output element carries a distinct upstream gradient.
  Var probe(const Var& y) { return ops::sum_all(ops::mul(y, Var::constant(weights_for(y.shape())))); }

  void check(const std::string& name, const std::function<Var()>& f, std::vector<Var> params, double tol = 1e-4) {
    GradCheckOptions o;
    o.tolerance = tol;
    o.seed = rng_();
    results_.push_back({name, grad_check(f, std::move(params), o)});
  }

  Rng& rng() { return rng_; }
  std::vector<GradSuiteResult> take() { return std::move(results_); }

 private:
  const Array& weights_for(const Shape& s) {
    for (const auto& w : probes_)
      if (w.shape() == s) return w;
    probes_.push_back(uniform_array(s, -1.0, 1.0, rng_));
    return probes_.back();
  }

  Rng rng_;
  std::vector<Array> probes_;
  std::vector<GradSuiteResult> results_;
};

}  // namespace

std::vector<GradSuiteResult> op_gradient_suite(std::uint64_t seed) {
  Suite s(seed);
  Var x = s.param({2, 2, 5, 5}), w = s.param({3, 2, 3, 3}), b = s.param({3});
  s.check("conv2d", [&] { return s.probe(ops::conv2d(x, w, b, 1, 1)); }, {x, w, b});
  s.check("conv2d/stride2", [&] { return s.probe(ops::conv2d(x, w, b, 2, 0)); }, {x, w, b});
  Var p = s.param({1, 2, 4, 4});
  s.check("maxpool2d", [&] { return s.probe(ops::maxpool2d(p, 2, 2)); }, {p});
  s.check("global_average_pool", [&] { return s.probe(ops::global_average_pool(p)); }, {p});
  Var d = s.param({3, 4}), dw = s.param({4, 2}), db = s.param({2});
  s.check("dense", [&] { return s.probe(ops::dense(d, dw, db)); }, {d, dw, db});

  Var a = s.param({2, 3}), c = s.param({2, 3}), pos = s.param({2, 3}, 0.5, 2.0);
  s.check("sigmoid", [&] { return s.probe(ops::sigmoid(a)); }, {a});
  s.check("logistic_open", [&] { return s.probe(ops::logistic_open(a, 1e-12)); }, {a});
  s.check("relu", [&] { return s.probe(ops::relu(a)); }, {a});
  s.check("exp", [&] { return s.probe(ops::exp(a)); }, {a});
  s.check("log", [&] { return s.probe(ops::log(pos)); }, {pos});
  s.check("square", [&] { return s.probe(ops::square(a)); }, {a});
  s.check("clamp_min", [&] { return s.probe(ops::clamp_min(pos, 1.0)); }, {pos});
  s.check("add", [&] { return s.probe(ops::add(a, c)); }, {a, c});
  s.check("sub", [&] { return s.probe(ops::sub(a, c)); }, {a, c});
  s.check("mul", [&] { return s.probe(ops::mul(a, c)); }, {a, c});
  s.check("div", [&] { return s.probe(ops::div(a, pos)); }, {a, pos});
  s.check("scale", [&] { return s.probe(ops::scale(a, -2.5)); }, {a});
  s.check("add_scalar", [&] { return s.probe(ops::add_scalar(a, 3.0)); }, {a});
  s.check("sum_axis", [&] { return s.probe(ops::sum_axis(a, 1)); }, {a});
  s.check("sum_all", [&] { return ops::sum_all(ops::square(a)); }, {a});
  s.check("mean_all", [&] { return ops::mean_all(ops::square(a)); }, {a});
  s.check("broadcast_axis", [&] { return s.probe(ops::broadcast_axis(ops::sum_axis(a, 0), 0, 4)); }, {a});
  s.check("reshape", [&] { return s.probe(ops::reshape(a, {3, 2})); }, {a});
  s.check("permute", [&] { return s.probe(ops::permute(a, {1, 0})); }, {a});
  s.check("concat", [&] { return s.probe(ops::concat({a, c}, 0)); }, {a, c});
  s.check("slice", [&] { return s.probe(ops::slice(a, 1, 1, 3)); }, {a});
  s.check("softmax_axis", [&] { return s.probe(ops::softmax_axis(a, 1)); }, {a});
  s.check("log_softmax_axis", [&] { return s.probe(ops::log_softmax_axis(a, 0)); }, {a});
  return s.take();
}

std::vector<GradSuiteResult> capsule_gradient_suite(std::uint64_t seed) {
  Suite s(seed);
  caps::RoutingConfig cfg;
  cfg.iterations = 2;
  cfg.lambda_initial = 0.01;

  Var poses = s.param({2, 3, 16}), w = s.param({3, 2, 16});
  s.check("compute_votes", [&] { return s.probe(caps::compute_votes(poses, w)); }, {poses, w});

  Var grid = s.param({1, 3, 3, 2, 16});
  s.check("unfold_windows", [&] { return s.probe(caps::unfold_windows(grid, 2, 1)); }, {grid});

  Var votes = s.param({2, 4, 3, 16}), a_in = s.param({2, 4}, 0.1, 0.9), ba = s.param({3}), bu = s.param({3});
  s.check("em_routing", [&] {
    const auto r = caps::em_routing(votes, a_in, ba, bu, cfg);
    return ops::add(s.probe(r.activations), s.probe(r.poses));
  }, {votes, a_in, ba, bu});
  caps::RoutingConfig three = cfg;
  three.iterations = 3;
  s.check("em_routing/3 iterations", [&] {
    const auto r = caps::em_routing(votes, a_in, ba, bu, three);
    return ops::add(s.probe(r.activations), s.probe(r.poses));
  }, {votes, a_in, ba, bu});
  caps::RoutingConfig plain = cfg;
  plain.scale_by_input_activation = false;
  s.check("em_routing/unscaled", [&] {
    return s.probe(caps::em_routing(votes, a_in, ba, bu, plain).activations);
  }, {votes, ba, bu});

  ParameterSet params;
  Var features = s.param({1, 4, 4, 4});
  caps::PrimaryCapsules prim(4, 32, params, "p.", s.rng());
  caps::ConvCapsules conv(2, 2, 3, 1, params, "c.", s.rng());
  caps::ClassCapsules cls(2 * 2 * 2, 2, params, "k.", s.rng());
  std::vector<Var> prim_params{features};
  for (const auto& [name, v] : params.entries())
    if (name.rfind("p.", 0) == 0) prim_params.push_back(v);
  s.check("primary_capsules", [&] {
    const auto t = prim.forward(features);
    return ops::add(s.probe(t.poses), s.probe(t.activations));
  }, prim_params);

  const std::vector<int> targets{1};
  std::vector<Var> conv_params{features};
  for (const auto& [name, v] : params.entries())
    if (name.rfind("c.", 0) == 0 || name.rfind("k.", 0) == 0) conv_params.push_back(v);
  s.check("conv_capsules+class_capsules/spread_loss", [&] {
    const auto out = cls.forward(conv.forward(prim.forward(features), cfg), cfg);
    return train::spread_loss(out.activations, targets, 0.5);
  }, conv_params);

  Var acts = s.param({3, 2}, 0.0, 1.0);
  const std::vector<int> t3{0, 1, 1};
  s.check("spread_loss", [&] { return train::spread_loss(acts, t3, 0.7); }, {acts});
  s.check("cross_entropy", [&] { return train::cross_entropy(acts, t3); }, {acts});
  return s.take();
}

GradSuiteResult model_gradient_check(std::size_t coordinates, std::uint64_t seed) {
  const model::EciinModel m(model::ModelConfig{}, seed);
  data::SyntheticOptions so;
  so.n = 2;
  so.seed = seed;
  const auto samples = data::generate_synthetic(so);
  const Array images = data::stack_pixels(samples, {0, 1});
  const std::vector<int> labels{samples[0].label, samples[1].label};
  std::vector<Var> params;
  for (const auto& [name, v] : m.parameters().entries()) params.push_back(v);
  GradCheckOptions o;
  o.tolerance = 1e-3;
  o.max_coordinates = coordinates;
  o.seed = seed;
  auto f = [&] { return model::total_loss(m.forward(images), labels, 0.5, m.config().loss_alpha); };
  return {"eciin_model/total_loss", grad_check(f, params, o)};
}

}  // namespace eciin
