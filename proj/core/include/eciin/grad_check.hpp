#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eciin/autodiff.hpp"

namespace eciin {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates checked per call; all of them when the total is below this.
  std::size_t max_coordinates = 10000;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error, |a-n| / max(floor, |a|, |n|).
  double abs_floor = 1e-8;
};

struct GradCheckEntry {
  std::size_t param = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  bool passed = false;
  std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h. `f` must rebuild its graph from the
/// current parameter values on every call. Throws NumericError when f is
/// not finite.
GradCheckReport grad_check(const std::function<ad::Var()>& f, std::vector<ad::Var> params,
                           const GradCheckOptions& options = {});

}  // namespace eciin
