// Runs the nine acceptance criteria and prints one PASS/FAIL line for each.
// Usage: eciin_acceptance [--only=1,2,...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eciin/capsule.hpp"
#include "eciin/dataset.hpp"
#include "eciin/grad_suite.hpp"
#include "eciin/loss.hpp"
#include "eciin/metrics.hpp"
#include "eciin/model.hpp"
#include "eciin/ops.hpp"
#include "eciin/region.hpp"
#include "eciin/trainer.hpp"
#include "support/oracles.hpp"

using namespace eciin;
using ad::Var;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1 -------------------------------------------------------------------

Verdict gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto results = op_gradient_suite(1);
  for (auto& r : capsule_gradient_suite(1)) results.push_back(std::move(r));
  const GradSuiteResult model = model_gradient_check(64, 1);
  double worst_op = 0.0;
  std::vector<std::string> failed;
  for (const auto& r : results) {
    worst_op = std::max(worst_op, r.report.max_rel_error);
    if (!r.report.passed) failed.push_back(r.name);
  }
  if (!model.report.passed) failed.push_back(model.name);
  const double secs = seconds_since(t0);
  Verdict v;
  v.pass = failed.empty() && model.report.checked >= 50 && secs < 300.0;
  v.detail = std::to_string(results.size()) + " op/capsule checks, worst rel err " + fmt("%.2e", worst_op) +
             " (< 1e-4); DESK model " + std::to_string(model.report.checked) + " params, worst " +
             fmt("%.2e", model.report.max_rel_error) + " (< 1e-3); " + fmt("%.1f s", secs);
  for (const auto& f : failed) v.detail += "; FAILED " + f;
  return v;
}

// ---- 2 -------------------------------------------------------------------

Verdict routing_invariants() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> dim(1, 6), iters(1, 4);
  std::uniform_real_distribution<double> log_lambda(-3.0, 1.0);
  double worst_sum = 0.0, worst_uniform = 0.0;
  long outside = 0, non_exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 1 + trial % 2, ni = static_cast<std::size_t>(dim(rng)), nj = static_cast<std::size_t>(dim(rng));
    caps::RoutingConfig cfg;
    cfg.iterations = iters(rng);
    cfg.lambda_initial = std::pow(10.0, log_lambda(rng));
    const Var votes = Var::constant(oracle::random_array({b, ni, nj, 16}, rng, -3.0, 3.0));
    const Var a_in = Var::constant(oracle::random_array({b, ni}, rng, 0.01, 0.99));
    const Var ba = Var::constant(oracle::random_array({nj}, rng, -2.0, 2.0));
    const Var bu = Var::constant(oracle::random_array({nj}, rng, -2.0, 2.0));
    caps::RoutingTrace trace;
    const auto out = caps::em_routing(votes, a_in, ba, bu, cfg, &trace);
    for (double r : trace.initial_assignments.data())
      worst_uniform = std::max(worst_uniform, std::abs(r - 1.0 / static_cast<double>(nj)));
    for (const auto& r : trace.assignments)
      for (std::size_t row = 0; row < b * ni; ++row) {
        double s = 0.0;
        for (std::size_t j = 0; j < nj; ++j) s += r[row * nj + j];
        worst_sum = std::max(worst_sum, std::abs(s - 1.0));
      }
    for (const auto& acts : trace.activations)
      for (double a : acts.data()) outside += (a > 0.0 && a < 1.0) ? 0 : 1;
    for (double a : out.activations.value().data()) outside += (a > 0.0 && a < 1.0) ? 0 : 1;

    // the same configuration with a single input capsule
    const Var one_vote = Var::constant(oracle::random_array({1, 1, nj, 16}, rng, -3.0, 3.0));
    const Var one_act = Var::constant(oracle::random_array({1, 1}, rng, 0.01, 0.99));
    const auto single = caps::em_routing(one_vote, one_act, ba, bu, cfg);
    for (std::size_t k = 0; k < nj * 16; ++k) non_exact += single.poses.value()[k] == one_vote.value()[k] ? 0 : 1;
  }
  Verdict v;
  v.pass = worst_sum <= 1e-9 && outside == 0 && non_exact == 0 && worst_uniform == 0.0;
  v.detail = "1000 instances: max |sum_j r - 1| " + fmt("%.1e", worst_sum) + ", activations outside (0,1): " +
             std::to_string(outside) + ", single-capsule pose mismatches: " + std::to_string(non_exact) +
             ", max |r0 - 1/J| " + fmt("%.1e", worst_uniform);
  return v;
}

// ---- 3 -------------------------------------------------------------------

Verdict oracle_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> small(1, 4), spatial(3, 9);
  const int n = 120;
  double conv = 0, pool = 0, dense = 0, route = 0;
  int box_mismatch = 0, metric_mismatch = 0, boxes_checked = 0;
  for (int t = 0; t < n; ++t) {
    const std::size_t c = static_cast<std::size_t>(small(rng)), o = static_cast<std::size_t>(small(rng));
    const std::size_t s = static_cast<std::size_t>(spatial(rng));
    const int stride = 1 + t % 2, pad = t % 3 == 0 ? 0 : 1;
    const Array x = oracle::random_array({2, c, s, s}, rng), w = oracle::random_array({o, c, 3, 3}, rng),
                b = oracle::random_array({o}, rng);
    conv = std::max(conv, max_abs_diff(ops::conv2d(x, w, b, stride, pad), oracle::conv2d(x, w, b, stride, pad)));
    pool = std::max(pool, max_abs_diff(ops::maxpool2d(x, 2, 2), oracle::maxpool2d(x, 2, 2)));
    const Array dx = oracle::random_array({3, c * 5}, rng), dw = oracle::random_array({c * 5, o}, rng);
    dense = std::max(dense, max_abs_diff(ops::dense(dx, dw, b), oracle::dense(dx, dw, b)));

    const std::size_t ni = static_cast<std::size_t>(small(rng)), nj = static_cast<std::size_t>(small(rng));
    caps::RoutingConfig cfg;
    cfg.iterations = 1 + t % 3;
    cfg.lambda_initial = t % 2 ? 0.01 : 1.0;
    const Array votes = oracle::random_array({1, ni, nj, 16}, rng, -2.0, 2.0);
    const Array a_in = oracle::random_array({1, ni}, rng, 0.05, 0.95);
    const Array ba = oracle::random_array({nj}, rng), bu = oracle::random_array({nj}, rng);
    const auto got = caps::em_routing(Var::constant(votes), Var::constant(a_in), Var::constant(ba), Var::constant(bu), cfg);
    std::vector<std::vector<std::vector<double>>> v(ni, std::vector<std::vector<double>>(nj, std::vector<double>(16)));
    for (std::size_t i = 0; i < ni; ++i)
      for (std::size_t j = 0; j < nj; ++j)
        for (std::size_t h = 0; h < 16; ++h) v[i][j][h] = votes[(i * nj + j) * 16 + h];
    const auto want = oracle::em_routing(v, {a_in.data().begin(), a_in.data().end()}, {ba.data().begin(), ba.data().end()},
                                         {bu.data().begin(), bu.data().end()}, cfg.iterations, cfg.lambda_initial,
                                         cfg.lambda_growth, cfg.variance_floor, cfg.activation_eps);
    for (std::size_t j = 0; j < nj; ++j) {
      route = std::max(route, std::abs(got.activations.value()[j] - want.activation[j]));
      for (std::size_t h = 0; h < 16; ++h) route = std::max(route, std::abs(got.poses.value()[j * 16 + h] - want.pose[j][h]));
    }

    const std::size_t g = 2 + static_cast<std::size_t>(t % 7);
    const Array grid = oracle::random_array({g, g}, rng, 0.0, 1.0);
    const Array image = oracle::random_array({3, 32, 32}, rng, 0.0, 1.0);
    const auto cr = mining::strategy_cr(image, cnn::Cam{grid, 1}, 0.8, 32);
    if (const auto cells = oracle::scan_box(grid, 0.8)) {
      const auto px = oracle::cells_to_pixels(*cells, static_cast<int>(g), static_cast<int>(g), 32, 32);
      box_mismatch += (!cr.fallback && cr.box == mining::BBox{px.x0, px.y0, px.x1, px.y1}) ? 0 : 1;
      ++boxes_checked;
    } else {
      box_mismatch += cr.fallback ? 0 : 1;
    }

    std::vector<int> pred(20 + t), label(20 + t);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      pred[k] = static_cast<int>(rng() % 2);
      label[k] = static_cast<int>(rng() % 2);
    }
    label[0] = 1;  // keep the positive class present
    const auto m = train::compute_metrics(pred, label);
    const auto ref = oracle::confusion(pred, label);
    const bool same = static_cast<long>(m.tp) == ref.tp && static_cast<long>(m.tn) == ref.tn &&
                      static_cast<long>(m.fp) == ref.fp && static_cast<long>(m.fn) == ref.fn &&
                      m.accuracy == ref.accuracy && m.precision == ref.precision && m.recall == ref.recall &&
                      m.f_measure == ref.f;
    metric_mismatch += same ? 0 : 1;
  }
  const double worst = std::max({conv, pool, dense, route});
  Verdict v;
  v.pass = worst < 1e-10 && box_mismatch == 0 && metric_mismatch == 0;
  v.detail = std::to_string(n) + " instances each: max diff conv2d " + fmt("%.1e", conv) + ", maxpool2d " +
             fmt("%.1e", pool) + ", dense " + fmt("%.1e", dense) + ", em_routing " + fmt("%.1e", route) +
             "; CR box mismatches " + std::to_string(box_mismatch) + " (" + std::to_string(boxes_checked) +
             " non-empty); metric mismatches " + std::to_string(metric_mismatch);
  return v;
}

// ---- 4 -------------------------------------------------------------------

Verdict point_checks() {
  const Array acts({2}, std::vector<double>{0.5, 0.6});
  const double spread = train::spread_loss(acts, 1, 0.2);
  const Var sv = train::spread_loss(Var::constant(acts.reshaped({1, 2})), {1}, 0.2);
  const double m0 = train::margin_schedule(0, 1000), m1 = train::margin_schedule(1000, 1000);
  const auto r = train::metrics_from_counts(3, 1, 1, 1);
  Verdict v;
  v.pass = std::abs(spread - 0.01) < 1e-12 && std::abs(sv.value()[0] - 0.01) < 1e-12 && m0 == 0.2 && m1 == 0.9 &&
           std::abs(r.accuracy - 0.6667) <= 1e-4 && r.f_measure == 0.75;
  v.detail = "spread_loss " + fmt("%.15g", spread) + ", margin endpoints " + fmt("%.17g", m0) + "/" + fmt("%.17g", m1) +
             ", accuracy " + fmt("%.6f", r.accuracy) + ", F " + fmt("%.17g", r.f_measure);
  return v;
}

// ---- 5, 6, 8 -------------------------------------------------------------

struct SyntheticSplit {
  std::vector<data::Sample> train, test;
};

SyntheticSplit synthetic_split(std::uint64_t seed) {
  data::SyntheticOptions o;
  o.n = 2500;
  o.seed = seed;
  auto all = data::generate_synthetic(o);
  SyntheticSplit s;
  s.train.assign(all.begin(), all.begin() + 2000);
  s.test.assign(all.begin() + 2000, all.end());
  return s;
}

struct Run {
  double accuracy = 0.0;
  double seconds = 0.0;
  std::optional<model::EciinModel> model;
};

Run train_run(model::Variant variant, std::uint64_t seed, const SyntheticSplit& data) {
  model::ModelConfig cfg;
  cfg.variant = variant;
  // Adam leaves the majority-class plateau within 2-3 epochs on every seed
  // tried; SGD with momentum needs 5-8 epochs and sometimes more than 10.
  train::TrainConfig tc;
  tc.optimizer.kind = train::OptimizerKind::Adam;
  tc.optimizer.learning_rate = 1e-3;
  tc.seed = seed;
  Run run;
  run.model.emplace(cfg, seed);
  const auto t0 = std::chrono::steady_clock::now();
  train::train(*run.model, data.train, {}, tc);
  run.seconds = seconds_since(t0);
  run.accuracy = train::evaluate(*run.model, data.test).accuracy;
  std::printf("    %-18s seed %llu: test accuracy %.4f, %.0f s\n", model::to_string(variant).c_str(),
              static_cast<unsigned long long>(seed), run.accuracy, run.seconds);
  std::fflush(stdout);
  return run;
}

struct Shared {
  std::map<std::uint64_t, Run> full;  // FULL runs of criterion 5, by seed
  std::map<std::uint64_t, SyntheticSplit> data;

  const SyntheticSplit& split(std::uint64_t seed) {
    auto it = data.find(seed);
    if (it == data.end()) it = data.emplace(seed, synthetic_split(seed)).first;
    return it->second;
  }
  Run& full_run(std::uint64_t seed) {
    auto it = full.find(seed);
    if (it == full.end()) it = full.emplace(seed, train_run(model::Variant::Full, seed, split(seed))).first;
    return it->second;
  }
};

Verdict synthetic_end_to_end(Shared& shared) {
  int ok = 0;
  std::string accs;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Run& r = shared.full_run(seed);
    ok += (r.accuracy >= 0.95 && r.seconds <= 600.0) ? 1 : 0;
    accs += (seed > 1 ? ", " : "") + fmt("%.3f", r.accuracy) + fmt(" (%.0f s)", r.seconds);
  }
  Verdict v;
  v.pass = ok >= 4;
  v.detail = std::to_string(ok) + "/5 seeds reach >= 0.95 within 600 s: " + accs;
  return v;
}

Verdict ablation_ordering(Shared& shared) {
  const model::Variant order[] = {model::Variant::TwoStreamCnn, model::Variant::TwoStreamCnnContextCap,
                                  model::Variant::TwoStreamCnnTwoStreamCap, model::Variant::Full};
  std::map<model::Variant, double> mean;
  for (std::uint64_t seed = 1; seed <= 3; ++seed)
    for (model::Variant var : order) {
      const double acc =
          var == model::Variant::Full ? shared.full_run(seed).accuracy : train_run(var, seed, shared.split(seed)).accuracy;
      mean[var] += acc / 3.0;
    }
  const double full = mean[model::Variant::Full], cnn = mean[model::Variant::TwoStreamCnn],
               two = mean[model::Variant::TwoStreamCnnTwoStreamCap];
  Verdict v;
  v.pass = full >= cnn && full >= two - 0.01;
  v.detail = "mean accuracy over seeds 1-3:";
  for (model::Variant var : order) v.detail += " " + model::to_string(var) + " " + fmt("%.4f", mean[var]);
  return v;
}

Verdict eye_mining(Shared& shared) {
  const Run& r = shared.full_run(1);
  const auto& test = shared.split(1).test;
  std::vector<double> ious;
  int fallbacks = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto out = r.model->forward_full(test[i].pixels);
    ious.push_back(mining::iou(out.eye_region_bbox, *test[i].eye_box));
    fallbacks += out.fallback ? 1 : 0;
  }
  const double med = median(ious);
  Verdict v;
  v.pass = med >= 0.3;
  v.detail = "median IoU " + fmt("%.3f", med) + " over 200 test images of the seed-1 model (" +
             std::to_string(fallbacks) + " fallbacks)";
  return v;
}

// ---- 7 -------------------------------------------------------------------

Verdict strategy_suite() {
  std::mt19937_64 rng(7);
  data::SyntheticOptions so;
  so.n = 4;
  so.seed = 7;
  const auto samples = data::generate_synthetic(so);
  const Array images = data::stack_pixels(samples, {0, 1, 2, 3});
  std::string ran;
  bool all_ran = true;
  for (auto kind : {mining::StrategyKind::WM, mining::StrategyKind::CO, mining::StrategyKind::BM, mining::StrategyKind::CR}) {
    model::ModelConfig cfg;
    cfg.region_strategy.kind = kind;
    const model::EciinModel m(cfg, 7);
    const auto out = m.forward(images);
    bool finite = out.class_scores.value().all_finite() && out.class_scores.shape() == Shape{4, 2};
    const Var loss = model::total_loss(out, {0, 1, 1, 0}, 0.5, cfg.loss_alpha);
    ad::backward(loss);
    finite = finite && std::isfinite(loss.value()[0]);
    all_ran = all_ran && finite;
    ran += (ran.empty() ? "" : ",") + mining::to_string(kind);
  }

  int bm_mismatch = 0, cr_mismatch = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t g = 2 + static_cast<std::size_t>(t % 7);
    const cnn::Cam cam{oracle::random_array({g, g}, rng, 0.0, 1.0), 1};
    const Array image = oracle::random_array({3, 32, 32}, rng, 0.0, 1.0);
    const Array bm = mining::strategy_bm(image, cam, 0.8);
    const Array wm = mining::strategy_wm(image, mining::binarize(cam, 0.8, 32));
    bm_mismatch += (same_shape(bm, wm) && bm.storage() == wm.storage()) ? 0 : 1;
    const auto cr = mining::strategy_cr(image, cam, 0.8, 32);
    if (const auto cells = oracle::scan_box(cam.grid, 0.8)) {
      const auto px = oracle::cells_to_pixels(*cells, static_cast<int>(g), static_cast<int>(g), 32, 32);
      cr_mismatch += (!cr.fallback && cr.box == mining::BBox{px.x0, px.y0, px.x1, px.y1}) ? 0 : 1;
    } else {
      cr_mismatch += cr.fallback ? 0 : 1;
    }
  }

  const Array image = oracle::random_array({3, 32, 32}, rng, 0.0, 1.0);
  const cnn::Cam empty{Array({4, 4}, 0.5), 1};
  const auto a = mining::strategy_cr(image, empty, 0.8, 32), b = mining::strategy_cr(image, empty, 0.8, 32);
  const bool fallback_ok = a.fallback && b.fallback && a.box == mining::BBox{8, 8, 24, 24} && a.box == b.box &&
                           a.image.storage() == b.image.storage();
  Verdict v;
  v.pass = all_ran && bm_mismatch == 0 && cr_mismatch == 0 && fallback_ok;
  v.detail = "strategies " + ran + (all_ran ? " train end-to-end" : " FAILED end-to-end") + "; BM vs WM(binarized) mismatches " +
             std::to_string(bm_mismatch) + "/100; CR vs scan oracle mismatches " + std::to_string(cr_mismatch) +
             "/100; fallback " + (fallback_ok ? "deterministic central box" : "WRONG");
  return v;
}

// ---- 9 -------------------------------------------------------------------

Verdict reproducibility() {
  data::SyntheticOptions o;
  o.n = 400;
  o.seed = 9;
  const auto all = data::generate_synthetic(o);
  const std::vector<data::Sample> tr(all.begin(), all.begin() + 300), te(all.begin() + 300, all.end());
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 9;
  auto log_of = [&] {
    model::EciinModel m(model::ModelConfig{}, 9);
    std::string text = train::epoch_log_header() + "\n";
    for (const auto& row : train::train(m, tr, te, tc).log) text += train::epoch_log_row(row) + "\n";
    return text;
  };
  const std::string a = log_of(), b = log_of();
  Verdict v;
  v.pass = a == b;
  v.detail = std::string(a == b ? "identical" : "DIFFERENT") + " 3-epoch logs (" + std::to_string(a.size()) +
             " bytes each) from two runs of seed 9";
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strncmp(argv[i], "--only=", 7) != 0) {
      std::fprintf(stderr, "usage: %s [--only=1,2,...]\n", argv[0]);
      return 2;
    }
    std::stringstream ss(argv[i] + 7);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }

  Shared shared;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"routing invariants", routing_invariants},
      {"oracle equivalence", oracle_equivalence},
      {"point checks", point_checks},
      {"synthetic end-to-end", [&] { return synthetic_end_to_end(shared); }},
      {"ablation ordering", [&] { return ablation_ordering(shared); }},
      {"strategy suite", strategy_suite},
      {"eye-mining sanity", [&] { return eye_mining(shared); }},
      {"reproducibility", reproducibility},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    std::printf("criterion %d (%s) running...\n", id, criteria[k].first.c_str());
    std::fflush(stdout);
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
