#include <doctest.h>

#include <filesystem>
#include <random>
#include <sstream>

#include "eciin/checkpoint.hpp"
#include "eciin/errors.hpp"
#include "eciin/kv.hpp"
#include "eciin/model.hpp"
#include "support/oracles.hpp"

using namespace eciin;
using namespace eciin::model;
namespace fs = std::filesystem;

TEST_CASE("presets") {
  const ModelConfig hf = ModelConfig::hf();
  CHECK(hf.n_p == 512);
  CHECK(hf.n_t_stream == 32);
  CHECK(hf.k == 3);
  CHECK(hf.stride_stream == 2);
  CHECK(hf.feature_extent() == 7);
  CHECK(hf.stream_caps_extent() == 3);
  hf.validate();
  const ModelConfig pf = ModelConfig::pf();
  CHECK(pf.use_maxpool_after_cnn);
  CHECK(pf.primary_extent() == 3);
  pf.validate();
  const ModelConfig desk;
  CHECK(desk.preset == Preset::DESK);
  CHECK(desk.backbone.input_size == 32);
  CHECK(desk.backbone.stage_channels.size() == 3);
  desk.validate();
}

TEST_CASE("config keys apply, serialize and reject bad values") {
  ModelConfig c;
  c.apply("preset", "HF");
  CHECK(c.n_p == 512);
  c.apply("routing.iterations", "5");
  CHECK(c.routing.iterations == 5);
  CHECK_THROWS_AS(c.apply("bogus", "1"), ConfigError);
  CHECK_THROWS_AS(c.apply("n_p", "abc"), ConfigError);

  const ModelConfig back = deserialize_model_config(serialize(c));
  CHECK(serialize(back) == serialize(c));

  ModelConfig bad;
  bad.n_p = 40;
  bad.k = 9;
  CHECK(bad.violations().size() >= 2);
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("n_p"), ConfigError);

  ModelConfig hf = ModelConfig::hf();
  hf.n_t_stream = 8;
  CHECK_THROWS_AS(hf.validate(), ConfigError);
}

TEST_CASE("key-value text") {
  const KeyValues kv = parse_key_values("# comment\na = 1\n[routing]\niterations = 3 ; trailing\n");
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("routing.iterations") == "3");
  CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_key_values("novalue\n"), ConfigError);
  CHECK(format_double(0.1) == "0.1");
  CHECK(parse_double("x", "1e-3") == 1e-3);
  CHECK_THROWS_AS(parse_int("x", "1.5"), ConfigError);
}

namespace {

Array images(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_array({n, 3, 32, 32}, rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("forward shapes for every variant") {
  const Array x = images(2, 1);
  for (Variant v : kAllVariants) {
    ModelConfig c;
    c.variant = v;
    const EciinModel m(c, 1);
    const BatchOutput out = m.forward(x);
    CHECK(out.class_scores.shape() == Shape{2, 2});
    CHECK(out.cam_logits.shape() == Shape{2, 2});
    CHECK(out.cams.size() == 2);
    CHECK(out.boxes.size() == 2);
    for (double s : out.class_scores.value().data()) CHECK((s > 0.0 && s < 1.0));
    CHECK(out.predictions().size() == 2);
    if (v == Variant::TwoStreamCnn) {
      CHECK(out.capsule_heads.empty());
      CHECK(m.capsule_parameter_count() == 0);
    } else {
      CHECK_FALSE(out.capsule_heads.empty());
      CHECK(m.capsule_parameter_count() > 0);
    }
  }
}

TEST_CASE("every region strategy runs through the model") {
  const Array x = images(1, 2);
  for (auto k : {mining::StrategyKind::WM, mining::StrategyKind::CO, mining::StrategyKind::BM,
                 mining::StrategyKind::CR}) {
    ModelConfig c;
    c.region_strategy.kind = k;
    const EciinModel m(c, 2);
    const ModelOutput o = m.forward_full(x.reshaped({3, 32, 32}));
    CHECK(o.class_activations.shape() == Shape{2});
    CHECK(o.cam.grid.shape() == Shape{4, 4});
  }
}

TEST_CASE("model construction is seeded") {
  const EciinModel a(ModelConfig{}, 5), b(ModelConfig{}, 5), c(ModelConfig{}, 6);
  const auto sa = a.parameters().snapshot(), sb = b.parameters().snapshot(), sc = c.parameters().snapshot();
  bool differs = false;
  for (const auto& [name, arr] : sa) {
    CHECK(max_abs_diff(arr, sb.at(name)) == 0.0);
    differs = differs || max_abs_diff(arr, sc.at(name)) > 0.0;
  }
  CHECK(differs);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const fs::path dir = fs::temp_directory_path() / "eciin_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  ModelConfig c;
  c.variant = Variant::TwoStreamCnnTwoStreamCap;
  const EciinModel m(c, 9);
  save_model(dir / "m.eciin", m);
  const EciinModel back = load_model(dir / "m.eciin");
  CHECK(serialize(back.config()) == serialize(m.config()));
  const Array x = images(2, 3);
  CHECK(max_abs_diff(m.forward(x).class_scores.value(), back.forward(x).class_scores.value()) == 0.0);

  std::stringstream ss;
  TensorMap t{{"b", Array({2}, 1.5)}, {"a", Array({1, 3}, -0.25)}};
  write_archive(ss, t, DType::F32);
  const TensorMap r = read_archive(ss);
  CHECK(r.at("a").shape() == Shape{1, 3});
  CHECK(r.at("b")[1] == 1.5);

  std::stringstream junk("not an archive");
  CHECK_THROWS_AS(read_archive(junk), DataError);
}

TEST_CASE("backbone weights can be imported") {
  const EciinModel src(ModelConfig{}, 1);
  EciinModel dst(ModelConfig{}, 2);
  const TensorMap snap = src.parameters().snapshot();
  CHECK(dst.import_backbone(snap, "context.cnn.", true) == 6);
  CHECK(max_abs_diff(dst.parameters().get("eye.cnn.stage1.conv1.weight").value(),
                     snap.at("context.cnn.stage1.conv1.weight")) == 0.0);
}

TEST_CASE("argmax ties go to out of focus") {
  CHECK(argmax_class(0.5, 0.5) == kOutOfFocus);
  CHECK(argmax_class(0.4, 0.5) == kOnfocus);
}
