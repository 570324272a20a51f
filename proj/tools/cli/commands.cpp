#include "cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "eciin/errors.hpp"
#include "eciin/grad_suite.hpp"
#include "eciin/image_io.hpp"

namespace eciin::cli {

namespace fs = std::filesystem;

namespace {

struct Context {
  const RunConfig& cfg;
  fs::path dir;
  std::ostream& out;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

fs::path data_root(const RunConfig& cfg, const fs::path& manifest) {
  return cfg.data.root.empty() ? manifest.parent_path() : fs::path(cfg.data.root);
}

std::vector<data::Sample> load(const Context& c, const std::string& manifest) {
  if (manifest.empty()) throw ConfigError("data.manifest: required (write one with synth-data or aggregate-annotations)");
  data::LoadOptions o;
  o.size = c.cfg.model.backbone.input_size;
  o.skip_corrupt = c.cfg.data.skip_corrupt;
  auto r = data::load_dataset(data_root(c.cfg, manifest), manifest, o);
  for (const auto& w : r.warnings) c.out << "warning: " << w << "\n";
  return std::move(r.samples);
}

data::Split train_test(const Context& c) {
  if (!c.cfg.data.test_manifest.empty()) return {load(c, c.cfg.data.manifest), load(c, c.cfg.data.test_manifest)};
  return data::split_dataset(load(c, c.cfg.data.manifest), c.cfg.data.train_fraction, c.cfg.seed);
}

model::EciinModel model_for(const Context& c) {
  if (c.cfg.model_path.empty()) {
    c.out << "model.path not set: using an untrained model (seed " << c.cfg.seed << ")\n";
    return model::EciinModel(c.cfg.model, c.cfg.seed);
  }
  return model::load_model(c.cfg.model_path);
}

void write_metrics(const Context& c, const train::MetricsReport& r, const std::string& stem) {
  write_text(c.dir / (stem + ".txt"), train::format_report(r));
  write_text(c.dir / (stem + ".csv"), train::report_csv_header() + "\n" + train::report_csv_row(r) + "\n");
  c.out << train::format_report(r);
}

std::string box_csv(const mining::BBox& b) {
  return std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," + std::to_string(b.y1);
}

std::string flat_name(const std::string& path) {
  std::string s = fs::path(path).replace_extension().string();
  std::replace(s.begin(), s.end(), '/', '_');
  std::replace(s.begin(), s.end(), '\\', '_');
  return s;
}

// The CO strategy appends the CAM as a fourth channel; only the image is written.
Array image_channels(const Array& input) {
  if (input.shape()[0] <= 3) return input;
  const std::size_t h = input.shape()[1], w = input.shape()[2];
  const auto d = input.data();
  return Array({3, h, w}, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(3 * h * w)));
}

std::map<std::string, mining::BBox> read_boxes(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read eye boxes '" + file.string() + "'");
  std::map<std::string, mining::BBox> boxes;
  std::string line;
  for (int row = 1; std::getline(in, line); ++row) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string path, field;
    std::getline(ss, path, ',');
    int v[4];
    for (int& x : v) {
      if (!std::getline(ss, field, ',')) throw DataError(file.string() + " row " + std::to_string(row) + ": expected path,x0,y0,x1,y1");
      x = parse_int("x", field);
    }
    boxes[path] = {v[0], v[1], v[2], v[3]};
  }
  return boxes;
}

int cmd_synth_data(const Context& c) {
  data::SyntheticOptions o;
  o.n = static_cast<std::size_t>(c.cfg.synth.n);
  o.size = c.cfg.model.backbone.input_size;
  o.seed = c.cfg.seed;
  o.onfocus_ratio = c.cfg.synth.onfocus_ratio;
  o.onfocus_threshold = c.cfg.synth.onfocus_threshold;
  o.distractors = c.cfg.synth.distractors;
  const auto samples = data::generate_synthetic(o);
  fs::create_directories(c.dir / "images");
  std::vector<data::ManifestRow> rows;
  std::vector<std::string> boxes{"# path,x0,y0,x1,y1 of the rendered eye discs"};
  int positives = 0;
  for (const auto& s : samples) {
    const std::string rel = "images/" + s.image_path;
    io::write_png(c.dir / rel, s.pixels);
    rows.push_back({rel, s.label});
    boxes.push_back(rel + "," + box_csv(*s.eye_box));
    positives += s.label;
  }
  data::write_manifest(c.dir / "manifest.csv", rows);
  write_text(c.dir / "eye_boxes.csv", join_lines(boxes));
  c.out << "wrote " << samples.size() << " images (" << positives << " onfocus) to " << (c.dir / "images").string()
        << "\nmanifest: " << (c.dir / "manifest.csv").string() << "\n";
  return kExitOk;
}

int cmd_aggregate(const Context& c) {
  if (c.cfg.annotations.empty()) throw ConfigError("aggregate.annotations: required");
  const auto records = data::read_annotations(c.cfg.annotations);
  std::vector<data::ManifestRow> rows;
  int positives = 0;
  for (const auto& r : records) {
    rows.push_back({r.image_id, data::majority_vote(r)});
    positives += rows.back().label;
  }
  data::write_manifest(c.dir / "manifest.csv", rows);
  c.out << records.size() << " records, " << positives << " onfocus by majority vote\nmanifest: "
        << (c.dir / "manifest.csv").string() << "\n";
  return kExitOk;
}

int cmd_train(const Context& c) {
  const auto split = train_test(c);
  c.out << "train " << split.train.size() << " / test " << split.test.size() << " samples\n";
  model::EciinModel m(c.cfg.model, c.cfg.seed);
  std::ofstream log(c.dir / "epoch_log.csv", std::ios::binary);
  log << train::epoch_log_header() << "\n";
  c.out << train::epoch_log_header() << "\n";
  try {
    train::train(m, split.train, split.test, c.cfg.train, [&](const train::EpochLog& row) {
      log << train::epoch_log_row(row) << "\n" << std::flush;
      c.out << train::epoch_log_row(row) << "\n" << std::flush;
    });
  } catch (const NumericError&) {
    model::save_model(c.dir / "model.last_good.eciin", m);
    c.out << "training diverged; parameters from the start of the failing epoch saved to "
          << (c.dir / "model.last_good.eciin").string() << "\n";
    throw;
  }
  model::save_model(c.dir / "model.eciin", m);
  c.out << "model: " << (c.dir / "model.eciin").string() << "\n";
  write_metrics(c, train::evaluate(m, split.test, c.cfg.train.eval_batch_size), "metrics");
  return kExitOk;
}

int cmd_eval(const Context& c) {
  const model::EciinModel m = model_for(c);
  const auto test = c.cfg.data.test_manifest.empty() ? train_test(c).test : load(c, c.cfg.data.test_manifest);
  const auto ev = train::evaluate_detailed(m, test, c.cfg.train.eval_batch_size);
  std::vector<std::string> lines{"path,label,prediction,x0,y0,x1,y1,fallback"};
  for (std::size_t i = 0; i < test.size(); ++i)
    lines.push_back(test[i].image_path + "," + std::to_string(test[i].label) + "," + std::to_string(ev.predictions[i]) +
                    "," + box_csv(ev.boxes[i]) + "," + (ev.fallback[i] ? "1" : "0"));
  write_text(c.dir / "predictions.csv", join_lines(lines));
  write_metrics(c, ev.report, "metrics");
  return kExitOk;
}

int cmd_predict(const Context& c) {
  if (c.cfg.image.empty()) throw ConfigError("predict.image: required");
  const model::EciinModel m = model_for(c);
  const std::size_t s = static_cast<std::size_t>(m.config().backbone.input_size);
  Array img = io::read_image(c.cfg.image);
  if (img.shape()[1] != s || img.shape()[2] != s) img = io::resize_image(img, s, s);
  const auto o = m.forward_full(img);
  std::ostringstream t;
  t << "image: " << c.cfg.image << "\n"
    << "label: " << (o.prediction == 1 ? "onfocus" : "out_of_focus") << "\n"
    << "activation.out_of_focus: " << format_double(o.class_activations[0]) << "\n"
    << "activation.onfocus: " << format_double(o.class_activations[1]) << "\n"
    << "eye_region: " << box_csv(o.eye_region_bbox) << (o.fallback ? " (fallback)" : "") << "\n";
  write_text(c.dir / "prediction.txt", t.str());
  c.out << t.str();
  return kExitOk;
}

int cmd_mine_eyes(const Context& c) {
  const model::EciinModel m = model_for(c);
  const auto samples = load(c, c.cfg.data.manifest);
  std::map<std::string, mining::BBox> truth;
  if (!c.cfg.data.eye_boxes.empty()) truth = read_boxes(c.cfg.data.eye_boxes);
  const auto size = static_cast<std::size_t>(m.config().backbone.input_size);
  fs::create_directories(c.dir / "eyes");
  std::vector<std::string> lines;
  std::vector<double> ious;
  int fallbacks = 0;
  for (const auto& s : samples) {
    const auto o = m.forward_full(s.pixels);
    const auto r = mining::mine_region(s.pixels, o.cam, m.config().region_strategy, size);
    io::write_png(c.dir / "eyes" / (flat_name(s.image_path) + ".png"), image_channels(r.input));
    lines.push_back(s.image_path + "," + box_csv(r.box));
    fallbacks += r.fallback ? 1 : 0;
    if (auto it = truth.find(s.image_path); it != truth.end()) ious.push_back(mining::iou(r.box, it->second));
  }
  write_text(c.dir / "eye_boxes.csv", join_lines(lines));
  c.out << "mined " << samples.size() << " regions (" << fallbacks << " fallbacks) into " << (c.dir / "eyes").string()
        << "\n";
  if (!ious.empty()) {
    std::sort(ious.begin(), ious.end());
    const std::size_t n = ious.size();
    const double median = n % 2 ? ious[n / 2] : 0.5 * (ious[n / 2 - 1] + ious[n / 2]);
    const std::string s = "matched " + std::to_string(n) + " boxes, median IoU " + format_double(median) + "\n";
    write_text(c.dir / "mining.txt", s);
    c.out << s;
  }
  return kExitOk;
}

int cmd_gradcheck(const Context& c) {
  auto results = op_gradient_suite(c.cfg.seed);
  for (auto& r : capsule_gradient_suite(c.cfg.seed)) results.push_back(std::move(r));
  results.push_back(model_gradient_check(64, c.cfg.seed));
  std::vector<std::string> lines{"check,coordinates,max_rel_error,passed"};
  int failed = 0;
  for (const auto& r : results) {
    lines.push_back(r.name + "," + std::to_string(r.report.checked) + "," + format_double(r.report.max_rel_error) + "," +
                    (r.report.passed ? "1" : "0"));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-44s %6zu coords  max rel err %.3e  %s\n", r.name.c_str(), r.report.checked,
                  r.report.max_rel_error, r.report.passed ? "ok" : "FAIL");
    c.out << buf;
    failed += r.report.passed ? 0 : 1;
  }
  write_text(c.dir / "gradcheck.csv", join_lines(lines));
  c.out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

std::vector<model::Variant> parse_variants(const std::string& list) {
  std::vector<model::Variant> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) out.push_back(model::parse_variant(name));
  if (out.empty()) throw ConfigError("ablate.variants: empty list");
  return out;
}

int cmd_ablate(const Context& c) {
  const auto variants = parse_variants(c.cfg.ablate_variants);
  const auto split = train_test(c);
  std::vector<std::string> csv{"variant,seed,accuracy,f_measure,precision,recall"};
  std::vector<std::pair<double, double>> means(variants.size(), {0.0, 0.0});
  for (int k = 0; k < c.cfg.ablate_seeds; ++k) {
    const std::uint64_t seed = c.cfg.seed + static_cast<std::uint64_t>(k);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      model::ModelConfig mc = c.cfg.model;
      mc.variant = variants[v];
      model::EciinModel m(mc, seed);
      train::TrainConfig tc = c.cfg.train;
      tc.seed = seed;
      train::train(m, split.train, {}, tc);
      const auto r = train::evaluate(m, split.test, tc.eval_batch_size);
      csv.push_back(model::to_string(variants[v]) + "," + std::to_string(seed) + "," + format_double(r.accuracy) + "," +
                    format_double(r.f_measure) + "," + format_double(r.precision) + "," + format_double(r.recall));
      c.out << model::to_string(variants[v]) << " seed " << seed << ": accuracy " << format_double(r.accuracy) << "\n"
            << std::flush;
      means[v].first += r.accuracy / c.cfg.ablate_seeds;
      means[v].second += r.f_measure / c.cfg.ablate_seeds;
    }
  }
  std::ostringstream t;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-20s %10s %10s\n", "variant", "accuracy", "F");
  t << buf;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::snprintf(buf, sizeof buf, "%-20s %10.4f %10.4f\n", model::to_string(variants[v]).c_str(), means[v].first,
                  means[v].second);
    t << buf;
  }
  write_text(c.dir / "ablation.csv", join_lines(csv));
  write_text(c.dir / "ablation.txt", t.str());
  c.out << t.str();
  return kExitOk;
}

using Handler = int (*)(const Context&);

const std::vector<std::pair<CommandInfo, Handler>>& table() {
  static const std::vector<std::pair<CommandInfo, Handler>> t = {
      {{"train", "train a model on data.manifest and evaluate it on the held-out split"}, cmd_train},
      {{"eval", "evaluate model.path (or an untrained model) on the test data"}, cmd_eval},
      {{"predict", "classify predict.image and report the mined eye region"}, cmd_predict},
      {{"mine-eyes", "write the mined eye region of every manifest image"}, cmd_mine_eyes},
      {{"gradcheck", "finite-difference check of every op, the capsule layers and the model"}, cmd_gradcheck},
      {{"synth-data", "render a synthetic onfocus dataset with a manifest"}, cmd_synth_data},
      {{"aggregate-annotations", "majority-vote aggregate.annotations into a manifest"}, cmd_aggregate},
      {{"ablate", "train and compare the architecture variants"}, cmd_ablate},
  };
  return t;
}

}  // namespace

const std::vector<CommandInfo>& commands() {
  static const std::vector<CommandInfo> names = [] {
    std::vector<CommandInfo> v;
    for (const auto& [info, h] : table()) v.push_back(info);
    return v;
  }();
  return names;
}

bool is_command(const std::string& name) {
  const auto& t = table();
  return std::any_of(t.begin(), t.end(), [&](const auto& e) { return e.first.name == name; });
}

int dispatch(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto& t = table();
  const auto it = std::find_if(t.begin(), t.end(), [&](const auto& e) { return e.first.name == command; });
  if (it == t.end()) {
    err << "unknown command '" << command << "'\n";
    return kExitUsage;
  }
  RunConfig resolved = cfg;
  if (resolved.output_dir.empty()) resolved.output_dir = (default_output_root() / command).string();
  try {
    const fs::path dir = resolved.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.ini", format_key_values(resolved.to_key_values()));
    return it->second(Context{resolved, dir, out});
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace eciin::cli
