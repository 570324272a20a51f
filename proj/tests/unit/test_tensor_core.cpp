#include <doctest.h>

#include <cmath>
#include <random>

#include "eciin/errors.hpp"
#include "eciin/grad_check.hpp"
#include "eciin/ops.hpp"
#include "support/oracles.hpp"

using namespace eciin;
using ad::Var;

namespace {

Var param(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Var::parameter(oracle::random_array(std::move(s), rng, lo, hi));
}

// Weighted sum of all outputs so every output element gets a distinct upstream gradient.
Var probe(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum_all(ops::mul(y, Var::constant(oracle::random_array(y.shape(), rng))));
}

void expect_grads(const std::function<Var()>& f, std::vector<Var> params, double tol = 1e-4) {
  GradCheckOptions o;
  o.tolerance = tol;
  const auto rep = grad_check(f, std::move(params), o);
  INFO(rep.summary());
  CHECK(rep.passed);
}

}  // namespace

TEST_CASE("array basics") {
  Array a({2, 3}, 1.5);
  CHECK(a.size() == 6);
  CHECK(a.at({1, 2}) == 1.5);
  CHECK_THROWS_AS(a.at({2, 0}), ConfigError);
  CHECK_THROWS_AS(Array({2, 0}), ConfigError);
  CHECK(a.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(a.reshaped({4}), ConfigError);
}

TEST_CASE("conv2d matches the naive oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 2, c = 1 + trial % 3, o = 1 + trial % 4, h = 5 + trial % 4;
    const int stride = 1 + trial % 2, pad = trial % 2;
    const Array x = oracle::random_array({n, c, h, h}, rng);
    const Array w = oracle::random_array({o, c, 3, 3}, rng);
    const Array b = oracle::random_array({o}, rng);
    CHECK(max_abs_diff(ops::conv2d(x, w, b, stride, pad), oracle::conv2d(x, w, b, stride, pad)) < 1e-12);
  }
}

TEST_CASE("maxpool2d and dense match the naive oracles") {
  std::mt19937_64 rng(12);
  const Array x = oracle::random_array({2, 3, 6, 6}, rng);
  CHECK(max_abs_diff(ops::maxpool2d(x, 2, 2), oracle::maxpool2d(x, 2, 2)) == 0.0);
  const Array d = oracle::random_array({4, 5}, rng), w = oracle::random_array({5, 3}, rng), b = oracle::random_array({3}, rng);
  CHECK(max_abs_diff(ops::dense(d, w, b), oracle::dense(d, w, b)) < 1e-12);
}

TEST_CASE("shape errors name the operation") {
  std::mt19937_64 rng(1);
  Var x = param({1, 2, 4, 4}, rng), w = param({3, 3, 3, 3}, rng), b = param({3}, rng);
  CHECK_THROWS_WITH_AS(ops::conv2d(x, w, b, 1, 1), doctest::Contains("conv2d"), ConfigError);
  CHECK_THROWS_AS(ops::add(param({2}, rng), param({3}, rng)), ConfigError);
}

TEST_CASE("non-finite values are reported with op, shape and index") {
  Var x = Var::constant(Array({3}, std::vector<double>{1.0, 0.0, 2.0}));
  try {
    ops::log(x);
    FAIL("expected an error");
  } catch (const NonFiniteError& e) {
    CHECK(e.op() == "log");
    CHECK(e.index() == 1);
    CHECK(e.shape() == Shape{3});
  } catch (const NumericError&) {
    // log rejects non-positive input before computing
  }
  Var big = Var::constant(Array({2}, 800.0));
  CHECK_THROWS_AS(ops::exp(big), NonFiniteError);
}

TEST_CASE("sigmoid is stable and bounded") {
  const Array y = ops::sigmoid(Array({3}, std::vector<double>{-1000.0, 0.0, 1000.0}));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.5);
  CHECK(y[2] == 1.0);
  const Var z = ops::logistic_open(Var::constant(Array({2}, std::vector<double>{-1000.0, 1000.0})), 1e-12);
  CHECK(z.value()[0] > 0.0);
  CHECK(z.value()[1] < 1.0);
}

TEST_CASE("relu subgradient is zero at zero") {
  Var x = Var::parameter(Array({3}, std::vector<double>{-1.0, 0.0, 2.0}));
  ad::backward(ops::sum_all(ops::relu(x)));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("gradients of layer ops") {
  std::mt19937_64 rng(3);
  Var x = param({2, 2, 5, 5}, rng), w = param({3, 2, 3, 3}, rng), b = param({3}, rng);
  expect_grads([&] { return probe(ops::conv2d(x, w, b, 1, 1), 1); }, {x, w, b});
  expect_grads([&] { return probe(ops::conv2d(x, w, b, 2, 0), 2); }, {x, w, b});
  Var p = param({1, 2, 4, 4}, rng);
  expect_grads([&] { return probe(ops::maxpool2d(p, 2, 2), 3); }, {p});
  expect_grads([&] { return probe(ops::global_average_pool(p), 4); }, {p});
  Var d = param({3, 4}, rng), dw = param({4, 2}, rng), db = param({2}, rng);
  expect_grads([&] { return probe(ops::dense(d, dw, db), 5); }, {d, dw, db});
}

TEST_CASE("gradients of elementwise and reduction ops") {
  std::mt19937_64 rng(4);
  Var a = param({2, 3}, rng), b = param({2, 3}, rng), pos = param({2, 3}, rng, 0.5, 2.0);
  expect_grads([&] { return probe(ops::sigmoid(a), 1); }, {a});
  expect_grads([&] { return probe(ops::logistic_open(a, 1e-12), 1); }, {a});
  expect_grads([&] { return probe(ops::relu(a), 2); }, {a});
  expect_grads([&] { return probe(ops::exp(a), 3); }, {a});
  expect_grads([&] { return probe(ops::log(pos), 4); }, {pos});
  expect_grads([&] { return probe(ops::square(a), 5); }, {a});
  expect_grads([&] { return probe(ops::clamp_min(pos, 1.0), 6); }, {pos});
  expect_grads([&] { return probe(ops::add(a, b), 7); }, {a, b});
  expect_grads([&] { return probe(ops::sub(a, b), 8); }, {a, b});
  expect_grads([&] { return probe(ops::mul(a, b), 9); }, {a, b});
  expect_grads([&] { return probe(ops::div(a, pos), 10); }, {a, pos});
  expect_grads([&] { return probe(ops::scale(a, -2.5), 11); }, {a});
  expect_grads([&] { return probe(ops::add_scalar(a, 3.0), 12); }, {a});
  expect_grads([&] { return probe(ops::sum_axis(a, 1), 13); }, {a});
  expect_grads([&] { return ops::mean_all(ops::square(a)); }, {a});
  expect_grads([&] { return probe(ops::broadcast_axis(ops::sum_axis(a, 0), 0, 4), 14); }, {a});
  expect_grads([&] { return probe(ops::reshape(a, {3, 2}), 15); }, {a});
  expect_grads([&] { return probe(ops::permute(a, {1, 0}), 16); }, {a});
  expect_grads([&] { return probe(ops::concat({a, b}, 0), 17); }, {a, b});
  expect_grads([&] { return probe(ops::slice(a, 1, 1, 3), 18); }, {a});
  expect_grads([&] { return probe(ops::softmax_axis(a, 1), 19); }, {a});
  expect_grads([&] { return probe(ops::log_softmax_axis(a, 0), 20); }, {a});
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  Var x = Var::parameter(Array({1}, 3.0));
  Var y = ops::mul(x, x);
  ad::backward(ops::add(y, y));
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("no-grad guard stops recording") {
  Var x = Var::parameter(Array({2}, 1.0));
  {
    ad::NoGradGuard g;
    Var y = ops::square(x);
    CHECK(y.node()->parents.empty());
  }
  CHECK_FALSE(ops::square(x).node()->parents.empty());
}
