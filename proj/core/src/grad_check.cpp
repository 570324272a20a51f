#include "eciin/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "eciin/errors.hpp"

namespace eciin {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " checked=" << checked << " max_rel_error=" << max_rel_error
     << " worst(param=" << worst.param << ", index=" << worst.index << ", analytic=" << worst.analytic
     << ", numeric=" << worst.numeric << ")";
  return os.str();
}

GradCheckReport grad_check(const std::function<ad::Var()>& f, std::vector<ad::Var> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) p.zero_grad();
  ad::Var out = f();
  if (out.size() != 1) throw ConfigError("grad_check: function must return a scalar");
  if (!out.value().all_finite()) throw NumericError("grad_check: function value is not finite");
  ad::backward(out);

  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  // (param, index) pairs, subsampled deterministically when too many.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (std::size_t i = 0; i < params[k].size(); ++i) coords.emplace_back(k, i);
  if (coords.size() > options.max_coordinates) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  auto eval = [&]() {
    ad::NoGradGuard guard;
    ad::Var v = f();
    const double y = v.value()[0];
    if (!std::isfinite(y)) throw NumericError("grad_check: function value is not finite under perturbation");
    return y;
  };

  GradCheckReport report;
  for (auto [k, i] : coords) {
    double& x = params[k].mutable_value()[i];
    const double saved = x;
    x = saved + options.step;
    const double fp = eval();
    x = saved - options.step;
    const double fm = eval();
    x = saved;
    const double numeric = (fp - fm) / (2.0 * options.step);
    const double a = analytic[k][i];
    const double denom = std::max({options.abs_floor, std::abs(a), std::abs(numeric)});
    const double rel = std::abs(a - numeric) / denom;
    ++report.checked;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = {k, i, a, numeric, rel};
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  for (auto& p : params) p.zero_grad();
  return report;
}

}  // namespace eciin
