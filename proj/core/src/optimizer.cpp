#include "eciin/optimizer.hpp"

#include <cmath>

#include "eciin/errors.hpp"

namespace eciin::train {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::SgdMomentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw ConfigError("optimizer: expected one of {sgd, adam}, got '" + s + "'");
}

namespace {

void check_gradients(const ParameterSet& params) {
  for (const auto& [name, var] : params.entries()) {
    const Array& g = var.node()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericError("non-finite gradient in parameter '" + name + "' at index " + std::to_string(i));
      }
    }
  }
}

void ensure_state(std::vector<Array>& state, const ParameterSet& params) {
  if (state.size() == params.entries().size()) return;
  state.clear();
  for (const auto& e : params.entries()) state.emplace_back(e.second.shape());
}

}  // namespace

SgdMomentum::SgdMomentum(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {
  if (!(learning_rate > 0.0)) throw ConfigError("sgd: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must be in [0,1)");
}

void SgdMomentum::step(ParameterSet& params) {
  check_gradients(params);
  ensure_state(velocity_, params);
  std::size_t idx = 0;
  for (auto& [name, var] : params.entries()) {
    Array& v = velocity_[idx++];
    const Array& g = var.node()->grad;
    if (g.empty()) continue;
    Array& p = var.node()->value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p[i] -= lr_ * v[i];
    }
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be > 0");
}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void Adam::step(ParameterSet& params) {
  check_gradients(params);
  ensure_state(m_, params);
  ensure_state(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t idx = 0;
  for (auto& [name, var] : params.entries()) {
    Array& m = m_[idx];
    Array& v = v_[idx++];
    const Array& g = var.node()->grad;
    if (g.empty()) continue;
    Array& p = var.node()->value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& cfg) {
  if (cfg.kind == OptimizerKind::Adam) {
    return std::make_unique<Adam>(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  }
  return std::make_unique<SgdMomentum>(cfg.learning_rate, cfg.momentum);
}

}  // namespace eciin::train
