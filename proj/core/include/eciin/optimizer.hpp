#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eciin/parameters.hpp"

namespace eciin::train {

enum class OptimizerKind { SgdMomentum, Adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::SgdMomentum;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Updates every parameter of a set from its accumulated gradient.
/// Throws NumericError naming the parameter when a gradient is not finite;
/// in that case no parameter has been modified.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& params) = 0;
  virtual void reset() = 0;
};

/// v <- momentum * v + g;  p <- p - lr * v
class SgdMomentum final : public Optimizer {
 public:
  SgdMomentum(double learning_rate, double momentum);
  void step(ParameterSet& params) override;
  void reset() override { velocity_.clear(); }

 private:
  double lr_, momentum_;
  std::vector<Array> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void step(ParameterSet& params) override;
  void reset() override;

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Array> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& cfg);

}  // namespace eciin::train
