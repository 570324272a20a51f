#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/run_config.hpp"
#include "eciin/errors.hpp"

using namespace eciin;
using namespace eciin::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("eciin_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += l.empty() ? 0 : 1;
  return n;
}

RunConfig config_with(const std::vector<std::pair<std::string, std::string>>& flags) { return parse_config({}, flags); }

int run(const std::string& command, const RunConfig& cfg, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = dispatch(command, cfg, out, err);
  if (out_text) *out_text = out.str() + err.str();
  return code;
}

}  // namespace

TEST_CASE("empty config file gives the DESK defaults") {
  const fs::path dir = scratch_dir("empty");
  write_text(dir / "empty.ini", "");
  const RunConfig cfg = parse_config(dir / "empty.ini", {});
  CHECK(cfg.model.preset == model::Preset::DESK);
  CHECK(model::serialize(cfg.model) == model::serialize(model::ModelConfig{}));
  CHECK(cfg.seed == 0);
  CHECK(cfg.train.epochs == train::TrainConfig{}.epochs);
}

TEST_CASE("preset HF expands the paper hyperparameters") {
  const RunConfig cfg = config_with({{"preset", "HF"}});
  CHECK(cfg.model.n_p == 512);
  CHECK(cfg.model.n_t_stream == 32);
  CHECK(cfg.model.k == 3);
  CHECK(cfg.model.backbone.input_size == 224);
}

TEST_CASE("flags override file values and preset is applied first") {
  const fs::path dir = scratch_dir("precedence");
  write_text(dir / "run.ini", "[routing]\niterations = 3\n\n[train]\nepochs = 4\n");
  const RunConfig cfg = parse_config(dir / "run.ini", parse_flag_tokens({"--routing.iterations=5", "--seed", "9"}));
  CHECK(cfg.model.routing.iterations == 5);
  CHECK(cfg.train.epochs == 4);
  CHECK(cfg.seed == 9);
  CHECK(cfg.train.seed == 9);

  // preset written after an explicit key still does not clobber it
  const RunConfig p = config_with({{"routing.iterations", "4"}, {"preset", "PF"}});
  CHECK(p.model.preset == model::Preset::PF);
  CHECK(p.model.routing.iterations == 4);
}

TEST_CASE("configuration errors name the key") {
  auto message = [](const std::vector<std::pair<std::string, std::string>>& flags) {
    try {
      config_with(flags);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"routing.iterationz", "3"}}).find("routing.iterationz") != std::string::npos);
  CHECK(message({{"routing.iterations", "three"}}).find("routing.iterations") != std::string::npos);
  CHECK(message({{"train.learning_rate", "fast"}}).find("train.learning_rate") != std::string::npos);
  CHECK(message({{"preset", "HF"}, {"n_p", "64"}}).find("n_p") != std::string::npos);
  CHECK(message({{"data.train_fraction", "1.5"}}).find("data.train_fraction") != std::string::npos);
  CHECK(message({{"seed", "-1"}}).find("seed") != std::string::npos);
  CHECK(message({{"train.seed", "1"}}).find("seed") != std::string::npos);
  CHECK_THROWS_AS(parse_flag_tokens({"train"}), ConfigError);
  CHECK_THROWS_AS(parse_flag_tokens({"--epochs"}), ConfigError);
  CHECK_THROWS_AS(parse_config("/nonexistent/run.ini", {}), ConfigError);
}

TEST_CASE("flag tokens and aliases") {
  const auto flags = parse_flag_tokens({"--n", "50", "--k=2", "--out", "x"});
  REQUIRE(flags.size() == 3);
  const RunConfig cfg = config_with(flags);
  CHECK(cfg.synth.n == 50);
  CHECK(cfg.model.k == 2);
  CHECK(cfg.output_dir == "x");
}

TEST_CASE("every key round trips through the echoed config") {
  RunConfig cfg = config_with({{"preset", "PF"}, {"train.epochs", "3"}, {"seed", "12"}, {"region.strategy", "WM"}});
  const auto kv = cfg.to_key_values();
  CHECK(kv.size() == RunConfig::keys().size());
  const fs::path dir = scratch_dir("echo");
  write_text(dir / "echo.ini", format_key_values(kv));
  const RunConfig back = parse_config(dir / "echo.ini", {});
  CHECK(back.to_key_values() == kv);
}

TEST_CASE("unknown command is a usage error") {
  std::string text;
  CHECK(run("fly", RunConfig{}, &text) == kExitUsage);
  CHECK(text.find("fly") != std::string::npos);
  CHECK(is_command("mine-eyes"));
  CHECK(commands().size() == 8);
}

TEST_CASE("synth-data, train, eval, predict and mine-eyes pipeline") {
  const fs::path root = scratch_dir("pipeline");
  auto cfg_for = [&](const std::string& cmd, std::vector<std::pair<std::string, std::string>> flags) {
    flags.emplace_back("output.dir", (root / cmd).string());
    flags.emplace_back("seed", "4");
    return config_with(flags);
  };
  const std::string manifest = (root / "synth-data" / "manifest.csv").string();

  REQUIRE(run("synth-data", cfg_for("synth-data", {{"synth.n", "40"}})) == kExitOk);
  CHECK(count_lines(manifest) == 40);
  CHECK(fs::exists(root / "synth-data" / "images" / "synth_000039.png"));

  REQUIRE(run("train", cfg_for("train", {{"data.manifest", manifest}, {"train.epochs", "1"}})) == kExitOk);
  CHECK(count_lines(root / "train" / "epoch_log.csv") == 2);
  CHECK(fs::exists(root / "train" / "model.eciin"));
  CHECK(count_lines(root / "train" / "metrics.csv") == 2);

  const std::string model_path = (root / "train" / "model.eciin").string();
  REQUIRE(run("eval", cfg_for("eval", {{"data.manifest", manifest}, {"model.path", model_path}})) == kExitOk);
  CHECK(read_text(root / "eval" / "metrics.csv") == read_text(root / "train" / "metrics.csv"));
  CHECK(count_lines(root / "eval" / "predictions.csv") == 1 + 10);

  std::string text;
  const std::string image = (root / "synth-data" / "images" / "synth_000000.png").string();
  REQUIRE(run("predict", cfg_for("predict", {{"predict.image", image}, {"model.path", model_path}}), &text) == kExitOk);
  CHECK(text.find("activation.onfocus") != std::string::npos);
  CHECK(text.find("eye_region") != std::string::npos);

  const std::string boxes = (root / "synth-data" / "eye_boxes.csv").string();
  REQUIRE(run("mine-eyes", cfg_for("mine-eyes", {{"data.manifest", manifest}, {"model.path", model_path},
                                                  {"data.eye_boxes", boxes}}),
              &text) == kExitOk);
  CHECK(count_lines(root / "mine-eyes" / "eye_boxes.csv") == 40);
  CHECK(text.find("median IoU") != std::string::npos);
  std::size_t crops = 0;
  for (const auto& e : fs::directory_iterator(root / "mine-eyes" / "eyes")) crops += e.path().extension() == ".png";
  CHECK(crops == 40);

  // every artifact stays inside the declared output directories
  for (const auto& e : fs::directory_iterator(root)) {
    CHECK(e.is_directory());
    CHECK(fs::exists(e.path() / "config.ini"));
  }
}

TEST_CASE("eval on an untrained model still reports metrics") {
  const fs::path root = scratch_dir("untrained");
  REQUIRE(run("synth-data", config_with({{"synth.n", "12"}, {"output.dir", (root / "data").string()}})) == kExitOk);
  const RunConfig cfg = config_with({{"data.manifest", (root / "data" / "manifest.csv").string()},
                                     {"data.train_fraction", "0.5"}, {"output.dir", (root / "eval").string()}});
  REQUIRE(run("eval", cfg) == kExitOk);
  const std::string csv = read_text(root / "eval" / "metrics.csv");
  CHECK(csv.rfind("tp,tn,fp,fn,", 0) == 0);
  CHECK(count_lines(root / "eval" / "metrics.csv") == 2);
}

TEST_CASE("ablate emits one row per variant") {
  const fs::path root = scratch_dir("ablate");
  REQUIRE(run("synth-data", config_with({{"synth.n", "16"}, {"output.dir", (root / "data").string()}})) == kExitOk);
  const RunConfig cfg = config_with({{"data.manifest", (root / "data" / "manifest.csv").string()},
                                     {"train.epochs", "1"}, {"output.dir", (root / "ablate").string()}});
  std::string text;
  REQUIRE(run("ablate", cfg, &text) == kExitOk);
  CHECK(count_lines(root / "ablate" / "ablation.csv") == 1 + 4);
  for (const char* name : {"2S_CNN", "2S_CNN+ContextCAP", "2S_CNN+2S_CAP", "FULL"})
    CHECK(text.find(name) != std::string::npos);
}

TEST_CASE("aggregate-annotations writes majority labels") {
  const fs::path root = scratch_dir("aggregate");
  write_text(root / "votes.csv", "a.png,1,1,0\nb.png,0,1,0\nc.png,1,1,1\n");
  const RunConfig cfg =
      config_with({{"aggregate.annotations", (root / "votes.csv").string()}, {"output.dir", (root / "out").string()}});
  REQUIRE(run("aggregate-annotations", cfg) == kExitOk);
  const auto rows = data::read_manifest(root / "out" / "manifest.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].label == 1);
  CHECK(rows[1].label == 0);
  CHECK(rows[2].label == 1);

  write_text(root / "bad.csv", "a.png,1,1\n");
  const RunConfig bad =
      config_with({{"aggregate.annotations", (root / "bad.csv").string()}, {"output.dir", (root / "bad").string()}});
  CHECK(run("aggregate-annotations", bad) == kExitFailure);
}

TEST_CASE("gradcheck succeeds") {
  const fs::path root = scratch_dir("gradcheck");
  std::string text;
  CHECK(run("gradcheck", config_with({{"output.dir", root.string()}}), &text) == kExitOk);
  CHECK(text.find("FAIL") == std::string::npos);
  CHECK(fs::exists(root / "gradcheck.csv"));
}

TEST_CASE("output root comes from the environment") {
  setenv("ECIIN_OUTPUT_ROOT", "/tmp/some_root", 1);
  CHECK(default_output_root() == fs::path("/tmp/some_root"));
  unsetenv("ECIIN_OUTPUT_ROOT");
  CHECK(default_output_root() == fs::path("eciin_runs"));
}
