#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eciin/array.hpp"
#include "eciin/region.hpp"

namespace eciin::data {

enum class Subset { HF, PF, SYNTH };

struct Sample {
  std::string image_path;
  Array pixels;  // [3, S, S] in [0,1]
  int label = 0;  // 1 = onfocus, 0 = out of focus
  Subset subset = Subset::SYNTH;
  /// Union of the rendered eye discs (synthetic data only).
  std::optional<mining::BBox> eye_box;
};

struct AnnotationRecord {
  std::string image_id;
  std::vector<int> votes;
};

/// 1 iff at least two of exactly three binary votes are 1.
int majority_vote(const AnnotationRecord& rec);

struct ManifestRow {
  std::string path;
  int label = 0;
};

/// `relative_path,label` rows. Blank lines and lines starting with '#' are skipped.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRow>& rows);

/// `relative_path,v1,v2,v3` rows.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& file);

struct LoadOptions {
  int size = 32;
  bool skip_corrupt = false;
  Subset subset = Subset::HF;
};

struct LoadResult {
  std::vector<Sample> samples;
  std::vector<std::string> warnings;
};

/// Decodes every manifest row relative to `root`, resizes bilinearly to
/// size x size. Errors name the manifest row; with skip_corrupt they become
/// warnings instead.
LoadResult load_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest,
                        const LoadOptions& options = {});

struct Split {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

/// Stratified, seeded split with floor(n * train_fraction) training samples.
Split split_dataset(const std::vector<Sample>& samples, double train_fraction, std::uint64_t seed);
/// Index form of split_dataset over labels.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const std::vector<int>& labels,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

struct SyntheticOptions {
  std::size_t n = 1000;
  int size = 32;
  std::uint64_t seed = 0;
  double onfocus_ratio = 0.62;
  /// Pupil offset bound, as a fraction of the eye radius, below which a gaze is onfocus.
  double onfocus_threshold = 0.15;
  /// Offset range (fraction of eye radius) sampled for out-of-focus eyes.
  double offset_min = 0.45;
  double offset_max = 0.65;
  int distractors = 3;
};

/// Gaze parameters of one rendered subject.
struct SyntheticFace {
  double cx = 0, cy = 0, face_radius = 0, eye_radius = 0;
  double eye_dx = 0, eye_dy = 0;  // eye centre offsets from the face centre
  double offset_left[2] = {0, 0};
  double offset_right[2] = {0, 0};
};

/// 1 iff both pupil offsets are within threshold * eye_radius.
int synthetic_label(const SyntheticFace& face, double threshold);

/// Renders a face disc with two eyes over clutter; labels follow synthetic_label.
std::vector<Sample> generate_synthetic(const SyntheticOptions& options);
/// Rasterizes one face description; exposed so tests can plant exact offsets.
Array render_face(const SyntheticFace& face, int size, std::uint64_t clutter_seed, int distractors);
mining::BBox eye_region(const SyntheticFace& face, int size);

/// Batches of sample indices covering [0, n) exactly once; the last may be partial.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                 bool shuffle);

/// Stacks samples[indices] into [B, 3, S, S].
Array stack_pixels(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

}  // namespace eciin::data
