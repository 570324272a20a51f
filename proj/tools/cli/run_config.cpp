#include "cli/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "eciin/errors.hpp"

namespace eciin::cli {

namespace {

// Short spellings accepted on the command line.
const std::vector<std::pair<std::string, std::string>> kAliases = {
    {"n", "synth.n"},          {"epochs", "train.epochs"},   {"out", "output.dir"},
    {"model", "model.path"},   {"manifest", "data.manifest"}, {"lr", "train.learning_rate"},
};

std::string resolve_alias(const std::string& key) {
  for (const auto& [alias, full] : kAliases)
    if (alias == key) return full;
  return key;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != value.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return v;
}

}  // namespace

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  for (auto& [k, v] : train.to_key_values())
    if (k != "train.seed") kv[k] = v;
  kv["data.root"] = data.root;
  kv["data.manifest"] = data.manifest;
  kv["data.test_manifest"] = data.test_manifest;
  kv["data.eye_boxes"] = data.eye_boxes;
  kv["data.train_fraction"] = format_double(data.train_fraction);
  kv["data.skip_corrupt"] = data.skip_corrupt ? "true" : "false";
  kv["synth.n"] = std::to_string(synth.n);
  kv["synth.onfocus_ratio"] = format_double(synth.onfocus_ratio);
  kv["synth.onfocus_threshold"] = format_double(synth.onfocus_threshold);
  kv["synth.distractors"] = std::to_string(synth.distractors);
  kv["output.dir"] = output_dir;
  kv["model.path"] = model_path;
  kv["predict.image"] = image;
  kv["aggregate.annotations"] = annotations;
  kv["ablate.variants"] = ablate_variants;
  kv["ablate.seeds"] = std::to_string(ablate_seeds);
  kv["seed"] = std::to_string(seed);
  return kv;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, v] : RunConfig{}.to_key_values()) out.push_back(k);
  return out;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "train.seed") throw ConfigError("train.seed: use 'seed', which drives every random stream");
  if (key.rfind("train.", 0) == 0) {
    train.apply(key, value);
  } else if (key == "data.root") {
    data.root = value;
  } else if (key == "data.manifest") {
    data.manifest = value;
  } else if (key == "data.test_manifest") {
    data.test_manifest = value;
  } else if (key == "data.eye_boxes") {
    data.eye_boxes = value;
  } else if (key == "data.train_fraction") {
    data.train_fraction = parse_double(key, value);
  } else if (key == "data.skip_corrupt") {
    data.skip_corrupt = parse_bool(key, value);
  } else if (key == "synth.n") {
    synth.n = parse_int(key, value);
  } else if (key == "synth.onfocus_ratio") {
    synth.onfocus_ratio = parse_double(key, value);
  } else if (key == "synth.onfocus_threshold") {
    synth.onfocus_threshold = parse_double(key, value);
  } else if (key == "synth.distractors") {
    synth.distractors = parse_int(key, value);
  } else if (key == "output.dir") {
    output_dir = value;
  } else if (key == "model.path") {
    model_path = value;
  } else if (key == "predict.image") {
    image = value;
  } else if (key == "aggregate.annotations") {
    annotations = value;
  } else if (key == "ablate.variants") {
    ablate_variants = value;
  } else if (key == "ablate.seeds") {
    ablate_seeds = parse_int(key, value);
  } else if (key == "seed") {
    seed = parse_seed(key, value);
  } else {
    const auto mk = model::ModelConfig::keys();
    if (std::find(mk.begin(), mk.end(), key) == mk.end()) throw ConfigError("unknown configuration key '" + key + "'");
    model.apply(key, value);
  }
  train.seed = seed;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  std::vector<std::string> v;
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0))
    v.push_back("data.train_fraction must be in (0, 1)");
  if (synth.n < 0) v.push_back("synth.n must be >= 0");
  if (!(synth.onfocus_ratio >= 0.0 && synth.onfocus_ratio <= 1.0)) v.push_back("synth.onfocus_ratio must be in [0, 1]");
  if (!(synth.onfocus_threshold > 0.0)) v.push_back("synth.onfocus_threshold must be > 0");
  if (synth.distractors < 0) v.push_back("synth.distractors must be >= 0");
  if (ablate_seeds < 1) v.push_back("ablate.seeds must be >= 1");
  if (!v.empty()) {
    std::string msg = "invalid run configuration:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ConfigError(msg);
  }
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv("ECIIN_OUTPUT_ROOT");
  return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("eciin_runs");
}

RunConfig parse_config(const std::filesystem::path& file,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  KeyValues kv;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot read config file '" + file.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    kv = parse_key_values(ss.str());
  }
  for (const auto& [k, v] : overrides) kv[resolve_alias(k)] = v;

  RunConfig cfg;
  if (auto it = kv.find("preset"); it != kv.end()) cfg.apply("preset", it->second);
  for (const auto& [k, v] : kv)
    if (k != "preset") cfg.apply(k, v);
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, std::string>> parse_flag_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.size() < 3 || t.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + t + "'");
    const std::string body = t.substr(2);
    if (const auto eq = body.find('='); eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= tokens.size()) throw ConfigError("flag --" + body + " needs a value");
      out.emplace_back(body, tokens[++i]);
    }
  }
  return out;
}

}  // namespace eciin::cli
