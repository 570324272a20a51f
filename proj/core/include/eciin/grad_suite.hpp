#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eciin/grad_check.hpp"

namespace eciin {

struct GradSuiteResult {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks of every differentiable operation (tolerance 1e-4).
std::vector<GradSuiteResult> op_gradient_suite(std::uint64_t seed = 0);
/// Capsule votes, unfolding, routing, capsule layers and the losses (tolerance 1e-4).
std::vector<GradSuiteResult> capsule_gradient_suite(std::uint64_t seed = 0);
/// Total loss of the default (DESK, full variant) model on a two-image batch,
/// checked on `coordinates` sampled parameter entries (tolerance 1e-3).
GradSuiteResult model_gradient_check(std::size_t coordinates = 64, std::uint64_t seed = 0);

}  // namespace eciin
