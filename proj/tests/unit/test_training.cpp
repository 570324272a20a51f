#include <doctest.h>

#include <random>

#include "eciin/errors.hpp"
#include "eciin/grad_check.hpp"
#include "eciin/loss.hpp"
#include "eciin/trainer.hpp"
#include "support/oracles.hpp"

using namespace eciin;
using namespace eciin::train;
using ad::Var;

TEST_CASE("spread loss point values") {
  CHECK(spread_loss(Array({2}, std::vector<double>{0.0, 1.0}), 1, 0.9) == 0.0);
  CHECK(spread_loss(Array({2}, std::vector<double>{0.4, 0.4}), 0, 0.3) == doctest::Approx(0.09));
  CHECK(spread_loss(Array({2}, std::vector<double>{0.5, 0.6}), 1, 0.2) == doctest::Approx(0.01).epsilon(1e-12));
  const Var batch = Var::constant(Array({2, 2}, std::vector<double>{0.5, 0.6, 1.0, 0.0}));
  CHECK(spread_loss(batch, {1, 0}, 0.2).value()[0] == doctest::Approx(0.005));
}

TEST_CASE("spread loss is non-increasing in the target activation") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    Array a({3});
    for (auto& v : a.data()) v = u(rng);
    const double before = spread_loss(a, 2, 0.5);
    CHECK(before >= 0.0);
    a[2] += 0.1;
    CHECK(spread_loss(a, 2, 0.5) <= before);
  }
}

TEST_CASE("spread loss and cross-entropy gradients") {
  std::mt19937_64 rng(42);
  Var a = Var::parameter(oracle::random_array({4, 3}, rng, 0.0, 1.0));
  const std::vector<int> t{0, 2, 1, 1};
  auto rep = grad_check([&] { return spread_loss(a, t, 0.6); }, {a});
  CHECK(rep.passed);
  rep = grad_check([&] { return cross_entropy(a, t); }, {a});
  CHECK(rep.passed);
}

TEST_CASE("margin schedule") {
  CHECK(margin_schedule(0, 100) == 0.2);
  CHECK(margin_schedule(100, 100) == 0.9);
  CHECK(margin_schedule(50, 100) == doctest::Approx(0.55));
  CHECK(margin_schedule(150, 100) == 0.9);
  CHECK(margin_schedule(3, 0) == 0.9);
}

TEST_CASE("metrics point check") {
  const MetricsReport r = metrics_from_counts(3, 1, 1, 1);
  CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(r.precision == 0.75);
  CHECK(r.recall == 0.75);
  CHECK(r.f_measure == 0.75);
  const MetricsReport perfect = compute_metrics({1, 0, 1}, {1, 0, 1});
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.f_measure == 1.0);
}

TEST_CASE("metrics edge cases") {
  CHECK_THROWS_AS(compute_metrics({}, {}), DataError);
  CHECK_THROWS_AS(compute_metrics({1}, {1, 0}), ConfigError);
  const MetricsReport r = compute_metrics({0, 0}, {0, 1});
  CHECK(r.f_undefined);
  CHECK(r.f_measure == 0.0);
}

TEST_CASE("metrics match the brute-force confusion oracle") {
  std::mt19937_64 rng(43);
  std::bernoulli_distribution coin(0.6);
  std::vector<int> p(1000), y(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    p[i] = coin(rng);
    y[i] = coin(rng);
  }
  const MetricsReport r = compute_metrics(p, y);
  const oracle::Confusion c = oracle::confusion(p, y);
  CHECK(r.tp == static_cast<std::size_t>(c.tp));
  CHECK(r.tn == static_cast<std::size_t>(c.tn));
  CHECK(r.fp == static_cast<std::size_t>(c.fp));
  CHECK(r.fn == static_cast<std::size_t>(c.fn));
  CHECK(r.accuracy == c.accuracy);
  CHECK(r.f_measure == c.f);
  CHECK(r.f_measure == doctest::Approx(2 * r.precision * r.recall / (r.precision + r.recall)));
}

TEST_CASE("sgd momentum matches a hand-rolled update") {
  ParameterSet ps;
  Var w = ps.add("w", Array({2}, std::vector<double>{1.0, -2.0}));
  SgdMomentum opt(0.1, 0.9);
  double v[2] = {0, 0}, p[2] = {1.0, -2.0};
  for (int step = 0; step < 3; ++step) {
    ps.zero_grad();
    ad::backward(ops::sum_all(ops::square(w)));
    opt.step(ps);
    for (int i = 0; i < 2; ++i) {
      v[i] = 0.9 * v[i] + 2.0 * p[i];
      p[i] -= 0.1 * v[i];
    }
    CHECK(w.value()[0] == p[0]);
    CHECK(w.value()[1] == p[1]);
  }
}

TEST_CASE("optimizers converge on a quadratic and ignore zero gradients") {
  for (auto kind : {OptimizerKind::SgdMomentum, OptimizerKind::Adam}) {
    ParameterSet ps;
    Var w = ps.add("w", Array({1}, 3.0));
    auto opt = make_optimizer({kind, 0.05});
    for (int i = 0; i < 400; ++i) {
      ps.zero_grad();
      ad::backward(ops::sum_all(ops::square(w)));
      opt->step(ps);
    }
    CHECK(std::abs(w.value()[0]) < 1e-2);

    ParameterSet still;
    Var u = still.add("u", Array({2}, 1.5));
    auto o2 = make_optimizer({kind, 0.05});
    o2->step(still);
    CHECK(u.value()[0] == 1.5);
  }
}

TEST_CASE("a non-finite gradient names the parameter") {
  ParameterSet ps;
  Var w = ps.add("layer.weight", Array({1}, 1.0));
  w.node()->grad_buffer()[0] = std::numeric_limits<double>::quiet_NaN();
  SgdMomentum opt(0.1, 0.9);
  CHECK_THROWS_WITH_AS(opt.step(ps), doctest::Contains("layer.weight"), NumericError);
  CHECK(w.value()[0] == 1.0);
}

TEST_CASE("train config validation and keys") {
  TrainConfig c;
  c.validate();
  c.margin_start = 0.95;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig d;
  for (const auto& [k, v] : d.to_key_values()) d.apply(k, v);
  CHECK(d.to_key_values() == TrainConfig{}.to_key_values());
  CHECK_THROWS_AS(d.apply("train.nope", "1"), ConfigError);
}

namespace {

std::vector<data::Sample> tiny_set(std::size_t n, std::uint64_t seed) {
  data::SyntheticOptions o;
  o.n = n;
  o.seed = seed;
  return data::generate_synthetic(o);
}

}  // namespace

TEST_CASE("training memorizes ten samples and logs the margin ramp") {
  const auto samples = tiny_set(10, 5);
  model::EciinModel m(model::ModelConfig{}, 3);
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 10;
  c.optimizer.kind = OptimizerKind::Adam;
  c.optimizer.learning_rate = 3e-3;
  const TrainResult r = train::train(m, samples, {}, c);
  REQUIRE(r.log.size() == 30);
  CHECK(r.log.front().margin == 0.2);
  CHECK(r.log.back().margin == 0.9);
  for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].margin >= r.log[i - 1].margin);
  CHECK(r.log.back().train_acc == 1.0);
  CHECK_FALSE(r.log.back().val_acc.has_value());
  CHECK(evaluate(m, samples).accuracy == 1.0);
}

TEST_CASE("divergence restores the epoch-start parameters") {
  const auto samples = tiny_set(8, 6);
  model::EciinModel m(model::ModelConfig{}, 4);
  TrainConfig c;
  c.epochs = 1;
  c.batch_size = 4;
  c.optimizer.learning_rate = 1e300;
  const TensorMap before = m.parameters().snapshot();
  CHECK_THROWS_AS(train::train(m, samples, {}, c), NumericError);
  const TensorMap after = m.parameters().snapshot();
  for (const auto& [name, arr] : before) CHECK(max_abs_diff(arr, after.at(name)) == 0.0);
}

TEST_CASE("evaluation of an untrained model is a valid report") {
  const auto samples = tiny_set(12, 7);
  const model::EciinModel m(model::ModelConfig{}, 8);
  const MetricsReport r = evaluate(m, samples, 5);
  CHECK(r.total() == 12);
  CHECK((r.accuracy >= 0.0 && r.accuracy <= 1.0));
  CHECK_THROWS_AS(evaluate(m, {}), DataError);
}

TEST_CASE("epoch log rows") {
  EpochLog row{3, 0.5, 0.25, 0.75, 0.5, std::nullopt};
  CHECK(epoch_log_header() == "epoch,loss,margin,train_acc,val_acc,f_measure");
  CHECK(epoch_log_row(row) == "3,0.5,0.25,0.75,0.5,");
}
