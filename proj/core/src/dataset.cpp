#include "eciin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "eciin/errors.hpp"
#include "eciin/image_io.hpp"

namespace eciin::data {

int majority_vote(const AnnotationRecord& rec) {
  if (rec.votes.size() != 3) {
    throw DataError("annotation '" + rec.image_id + "': expected 3 votes, got " + std::to_string(rec.votes.size()));
  }
  int ones = 0;
  for (int v : rec.votes) {
    if (v != 0 && v != 1) throw DataError("annotation '" + rec.image_id + "': votes must be 0 or 1");
    ones += v;
  }
  return ones >= 2 ? 1 : 0;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_binary(const std::string& s, std::size_t row) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw DataError("row " + std::to_string(row) + ": expected 0 or 1, got '" + s + "'");
}

// (row number, fields) for every non-blank, non-comment line.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_rows(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    rows.emplace_back(row, split_csv(t));
  }
  return rows;
}

ManifestRow parse_manifest_row(std::size_t row, const std::vector<std::string>& f) {
  if (f.size() != 2 || f[0].empty()) {
    throw DataError("row " + std::to_string(row) + ": expected 'relative_path,label'");
  }
  return {f[0], parse_binary(f[1], row)};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest) {
  std::vector<ManifestRow> out;
  for (const auto& [row, fields] : read_rows(manifest)) out.push_back(parse_manifest_row(row, fields));
  return out;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRow>& rows) {
  std::ofstream out(manifest);
  if (!out) throw DataError("cannot write " + manifest.string());
  for (const auto& r : rows) out << r.path << ',' << r.label << '\n';
}

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& file) {
  std::vector<AnnotationRecord> out;
  for (const auto& [row, f] : read_rows(file)) {
    if (f.size() != 4 || f[0].empty()) {
      throw DataError("row " + std::to_string(row) + ": expected 'relative_path,v1,v2,v3'");
    }
    out.push_back({f[0], {parse_binary(f[1], row), parse_binary(f[2], row), parse_binary(f[3], row)}});
  }
  return out;
}

LoadResult load_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                        const LoadOptions& options) {
  if (options.size < 1) throw ConfigError("load_dataset: size must be >= 1");
  LoadResult result;
  const auto rows = read_rows(manifest);
  if (rows.empty()) result.warnings.push_back("manifest " + manifest.string() + " is empty");
  const auto s = static_cast<std::size_t>(options.size);
  for (const auto& [row, fields] : rows) {
    try {
      const ManifestRow r = parse_manifest_row(row, fields);
      const auto path = root / r.path;
      Array img;
      try {
        img = io::read_image(path);
      } catch (const DataError& e) {
        throw DataError("row " + std::to_string(row) + ": " + e.what());
      }
      if (img.dim(1) != s || img.dim(2) != s) img = io::resize_image(img, s, s);
      result.samples.push_back({r.path, std::move(img), r.label, options.subset, std::nullopt});
    } catch (const DataError& e) {
      if (!options.skip_corrupt) throw;
      result.warnings.emplace_back(e.what());
    }
  }
  return result;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const std::vector<int>& labels,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split: train fraction must be in (0,1), got " + std::to_string(train_fraction));
  }
  const std::size_t n = labels.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));

  // Group by label, shuffle each group, then apportion n_train by largest remainder.
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> groups(classes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
    groups[g].push_back(i);
  }
  std::vector<std::size_t> take(groups.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::shuffle(groups[g].begin(), groups[g].end(), rng);
    const double quota = static_cast<double>(groups[g].size()) * train_fraction;
    take[g] = static_cast<std::size_t>(std::floor(quota));
    assigned += take[g];
    remainders.emplace_back(quota - std::floor(quota), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n_train && r < remainders.size(); ++r, ++assigned) ++take[remainders[r].second];

  std::vector<std::size_t> train, test;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    train.insert(train.end(), groups[g].begin(), groups[g].begin() + static_cast<long>(take[g]));
    test.insert(test.end(), groups[g].begin() + static_cast<long>(take[g]), groups[g].end());
  }
  std::shuffle(train.begin(), train.end(), rng);
  std::shuffle(test.begin(), test.end(), rng);
  return {train, test};
}

Split split_dataset(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  auto [tr, te] = split_indices(labels, train_fraction, seed);
  Split out;
  for (auto i : tr) out.train.push_back(samples[i]);
  for (auto i : te) out.test.push_back(samples[i]);
  return out;
}

int synthetic_label(const SyntheticFace& face, double threshold) {
  const double bound = threshold * face.eye_radius;
  const double l = std::hypot(face.offset_left[0], face.offset_left[1]);
  const double r = std::hypot(face.offset_right[0], face.offset_right[1]);
  return (l <= bound && r <= bound) ? 1 : 0;
}

mining::BBox eye_region(const SyntheticFace& face, int size) {
  const double x0 = face.cx - face.eye_dx - face.eye_radius, x1 = face.cx + face.eye_dx + face.eye_radius;
  const double y0 = face.cy + face.eye_dy - face.eye_radius, y1 = face.cy + face.eye_dy + face.eye_radius;
  auto lo = [size](double v) { return std::clamp(static_cast<int>(std::floor(v)), 0, size); };
  auto hi = [size](double v) { return std::clamp(static_cast<int>(std::ceil(v)), 0, size); };
  return {lo(x0), lo(y0), hi(x1), hi(y1)};
}

namespace {

struct Shape2D {
  bool disc = true;
  double cx, cy, rx, ry;
  double rgb[3];
  bool contains(double x, double y) const {
    if (disc) return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= rx * rx;
    return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
  }
};

}  // namespace

Array render_face(const SyntheticFace& face, int size, std::uint64_t clutter_seed, int distractors) {
  std::mt19937_64 rng(clutter_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = size;

  double base[3], grad[3];
  const double gray = 0.25 + 0.5 * u(rng);
  for (int c = 0; c < 3; ++c) {
    base[c] = std::clamp(gray + 0.2 * (u(rng) - 0.5), 0.0, 1.0);
    grad[c] = 0.3 * (u(rng) - 0.5);
  }
  const double grad_angle = 2.0 * std::numbers::pi * u(rng);

  std::vector<Shape2D> clutter;
  for (int d = 0; d < distractors; ++d) {
    Shape2D sh;
    sh.disc = u(rng) < 0.5;
    sh.cx = s * u(rng);
    sh.cy = s * u(rng);
    sh.rx = s * (0.05 + 0.12 * u(rng));
    sh.ry = s * (0.05 + 0.12 * u(rng));
    for (double& c : sh.rgb) c = u(rng);
    clutter.push_back(sh);
  }
  double skin[3];
  const double tone = 0.45 + 0.4 * u(rng);
  skin[0] = std::min(1.0, tone + 0.15);
  skin[1] = tone;
  skin[2] = std::max(0.0, tone - 0.15);
  const double sclera = 0.92 + 0.06 * u(rng);
  const double pupil = 0.05 + 0.1 * u(rng);
  const double brightness = 0.8 + 0.4 * u(rng);

  const double ex[2] = {face.cx - face.eye_dx, face.cx + face.eye_dx};
  const double ey = face.cy + face.eye_dy;
  const double* offs[2] = {face.offset_left, face.offset_right};
  const double pupil_r = 0.5 * face.eye_radius;

  constexpr int kSuper = 4;
  Array img({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  std::normal_distribution<double> noise(0.0, 0.015);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy)
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
          const double t = ((px - s / 2) * std::cos(grad_angle) + (py - s / 2) * std::sin(grad_angle)) / s;
          double col[3];
          for (int c = 0; c < 3; ++c) col[c] = base[c] + grad[c] * t;
          for (const auto& sh : clutter)
            if (sh.contains(px, py)) std::copy(sh.rgb, sh.rgb + 3, col);
          const double dfx = px - face.cx, dfy = py - face.cy;
          if (dfx * dfx + dfy * dfy <= face.face_radius * face.face_radius) std::copy(skin, skin + 3, col);
          for (int e = 0; e < 2; ++e) {
            const double dx = px - ex[e], dy = py - ey;
            if (dx * dx + dy * dy > face.eye_radius * face.eye_radius) continue;
            const double qx = dx - offs[e][0], qy = dy - offs[e][1];
            const double v = (qx * qx + qy * qy <= pupil_r * pupil_r) ? pupil : sclera;
            col[0] = col[1] = col[2] = v;
          }
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      for (int c = 0; c < 3; ++c) {
        const double v = acc[c] / (kSuper * kSuper) * brightness + noise(rng);
        img[(static_cast<std::size_t>(c) * size + y) * size + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

std::vector<Sample> generate_synthetic(const SyntheticOptions& o) {
  if (o.size < 16) throw ConfigError("generate_synthetic: size must be >= 16, got " + std::to_string(o.size));
  if (!(o.onfocus_ratio >= 0.0 && o.onfocus_ratio <= 1.0)) throw ConfigError("generate_synthetic: ratio outside [0,1]");
  if (!(o.offset_min > o.onfocus_threshold && o.offset_max >= o.offset_min && o.offset_max < 1.0)) {
    throw ConfigError("generate_synthetic: out-of-focus offsets must exceed the onfocus threshold");
  }
  // Exact positive count, assigned in a seeded order.
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(o.n) * o.onfocus_ratio));
  std::vector<int> wanted(o.n, 0);
  std::fill(wanted.begin(), wanted.begin() + static_cast<long>(std::min(n_pos, o.n)), 1);
  std::mt19937_64 order(mix_seed(o.seed, ~0ULL));
  std::shuffle(wanted.begin(), wanted.end(), order);

  const double s = o.size;
  std::vector<Sample> out;
  out.reserve(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    std::mt19937_64 rng(mix_seed(o.seed, i));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SyntheticFace f;
    f.face_radius = s * (0.26 + 0.08 * u(rng));
    f.cx = f.face_radius + 1 + (s - 2 * f.face_radius - 2) * u(rng);
    f.cy = f.face_radius + 1 + (s - 2 * f.face_radius - 2) * u(rng);
    f.eye_radius = 0.32 * f.face_radius;
    f.eye_dx = 0.42 * f.face_radius;
    f.eye_dy = -0.15 * f.face_radius;
    if (wanted[i] == 1) {
      // Uniform in the disc of radius 0.1 r, safely inside the onfocus bound.
      for (double* off : {f.offset_left, f.offset_right}) {
        const double rad = 0.1 * f.eye_radius * std::sqrt(u(rng)), ang = 2 * std::numbers::pi * u(rng);
        off[0] = rad * std::cos(ang);
        off[1] = rad * std::sin(ang);
      }
    } else {
      const double ang = 2 * std::numbers::pi * u(rng);
      for (double* off : {f.offset_left, f.offset_right}) {
        const double mag = f.eye_radius * (o.offset_min + (o.offset_max - o.offset_min) * u(rng));
        const double a = ang + 0.2 * (u(rng) - 0.5);
        off[0] = mag * std::cos(a);
        off[1] = mag * std::sin(a);
      }
    }
    Sample smp;
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%06zu.png", i);
    smp.image_path = name;
    smp.pixels = render_face(f, o.size, rng(), o.distractors);
    smp.label = synthetic_label(f, o.onfocus_threshold);
    smp.subset = Subset::SYNTH;
    smp.eye_box = eye_region(f, o.size);
    out.push_back(std::move(smp));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 bool shuffle) {
  if (batch_size < 1) throw ConfigError("batch_iter: batch size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n; b += batch_size) {
    batches.emplace_back(order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(std::min(n, b + batch_size)));
  }
  return batches;
}

Array stack_pixels(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("stack_pixels: empty batch");
  const Shape& s = samples[indices[0]].pixels.shape();
  Array out({indices.size(), s[0], s[1], s[2]});
  const std::size_t len = numel(s);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Array& p = samples[indices[b]].pixels;
    if (p.shape() != s) throw ConfigError("stack_pixels: samples have different shapes");
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<long>(b * len));
  }
  return out;
}

}  // namespace eciin::data
