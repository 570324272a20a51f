#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "eciin/kv.hpp"
#include "eciin/model.hpp"
#include "eciin/trainer.hpp"

namespace eciin::cli {

struct DataConfig {
  std::string root;           // image root; defaults to the manifest's directory
  std::string manifest;
  std::string test_manifest;  // when empty the manifest is split
  std::string eye_boxes;      // optional `path,x0,y0,x1,y1` file for mining IoU
  double train_fraction = 0.75;
  bool skip_corrupt = false;
};

struct SynthConfig {
  int n = 2000;
  double onfocus_ratio = 0.62;
  double onfocus_threshold = 0.15;
  int distractors = 3;
};

struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  DataConfig data;
  SynthConfig synth;
  std::string output_dir;
  std::string model_path;   // checkpoint read by eval, predict and mine-eyes
  std::string image;        // predict input
  std::string annotations;  // aggregate-annotations input
  std::string ablate_variants = "2S_CNN,2S_CNN+ContextCAP,2S_CNN+2S_CAP,FULL";
  int ablate_seeds = 1;
  std::uint64_t seed = 0;

  KeyValues to_key_values() const;
  /// Applies one key. Throws ConfigError for unknown keys or malformed values.
  void apply(const std::string& key, const std::string& value);
  void validate() const;
  static std::vector<std::string> keys();
};

/// Default output root: $ECIIN_OUTPUT_ROOT, else "eciin_runs".
std::filesystem::path default_output_root();

/// Reads `file` (empty path = no file), overlays `overrides` and validates.
/// `preset` is applied before every other key so explicit values win over
/// the preset's. Errors name the offending key.
RunConfig parse_config(const std::filesystem::path& file,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

/// Splits `--key=value` and `--key value` tokens. Throws ConfigError on a
/// token that is not a flag or a flag without a value.
std::vector<std::pair<std::string, std::string>> parse_flag_tokens(const std::vector<std::string>& tokens);

}  // namespace eciin::cli
