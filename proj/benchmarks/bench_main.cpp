#include <benchmark/benchmark.h>

#include "eciin/autodiff.hpp"
#include "eciin/capsule.hpp"
#include "eciin/dataset.hpp"
#include "eciin/loss.hpp"
#include "eciin/model.hpp"
#include "eciin/ops.hpp"
#include "eciin/region.hpp"

using namespace eciin;

namespace {

void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Array x = uniform_array({16, c, s, s}, -1, 1, rng);
  const Array w = uniform_array({c, c, 3, 3}, -1, 1, rng);
  const Array b = uniform_array({c}, -1, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2d)->Args({16, 32})->Args({32, 16})->Args({64, 8})->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(2);
  ad::Var x = ad::Var::parameter(uniform_array({16, 16, 32, 32}, -1, 1, rng));
  ad::Var w = ad::Var::parameter(uniform_array({16, 16, 3, 3}, -1, 1, rng));
  ad::Var b = ad::Var::parameter(uniform_array({16}, -1, 1, rng));
  for (auto _ : state) {
    ad::Var y = ops::sum_all(ops::conv2d(x, w, b, 1, 1));
    ad::backward(y);
    benchmark::DoNotOptimize(w.grad());
  }
}
BENCHMARK(BM_Conv2dBackward)->Unit(benchmark::kMicrosecond);

void BM_EmRouting(benchmark::State& state) {
  const auto i = static_cast<std::size_t>(state.range(0));
  const auto j = static_cast<std::size_t>(state.range(1));
  Rng rng(3);
  const ad::Var votes = ad::Var::constant(uniform_array({64, i, j, 16}, -1, 1, rng));
  const ad::Var act = ad::Var::constant(uniform_array({64, i}, 0.05, 0.95, rng));
  const ad::Var ba = ad::Var::constant(uniform_array({j}, -1, 1, rng));
  const ad::Var bu = ad::Var::constant(uniform_array({j}, -1, 1, rng));
  caps::RoutingConfig cfg;
  cfg.lambda_initial = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(caps::em_routing(votes, act, ba, bu, cfg).activations.value());
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_EmRouting)->Args({36, 8})->Args({72, 8})->Args({128, 2})->Unit(benchmark::kMicrosecond);

void BM_StrategyCrop(benchmark::State& state) {
  Rng rng(4);
  const Array image = uniform_array({3, 32, 32}, 0, 1, rng);
  const cnn::Cam cam{uniform_array({4, 4}, 0, 1, rng)};
  for (auto _ : state) benchmark::DoNotOptimize(mining::strategy_cr(image, cam, 0.8, 32));
}
BENCHMARK(BM_StrategyCrop)->Unit(benchmark::kMicrosecond);

std::pair<Array, std::vector<int>> synthetic_batch(std::size_t n) {
  data::SyntheticOptions o;
  o.n = n;
  o.seed = 5;
  const auto samples = data::generate_synthetic(o);
  std::vector<std::size_t> idx(n);
  std::vector<int> labels(n);
  for (std::size_t k = 0; k < n; ++k) {
    idx[k] = k;
    labels[k] = samples[k].label;
  }
  return {data::stack_pixels(samples, idx), labels};
}

void BM_ModelForward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.variant = static_cast<model::Variant>(state.range(0));
  const model::EciinModel m(cfg, 1);
  const auto [images, labels] = synthetic_batch(16);
  ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(images).class_scores.value());
  state.SetLabel(model::to_string(cfg.variant));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_ModelForward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const model::EciinModel m(model::ModelConfig{}, 1);
  const auto [images, labels] = synthetic_batch(16);
  for (auto _ : state) {
    ad::Var loss = model::total_loss(m.forward(images), labels, 0.5, 1.0);
    ad::backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
