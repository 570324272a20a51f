#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eciin/backbone.hpp"
#include "eciin/capsule.hpp"
#include "eciin/kv.hpp"
#include "eciin/region.hpp"

namespace eciin::model {

enum class Preset { HF, PF, DESK };

/// Table of the ablated architectures, from plain two-stream CNNs with
/// decision-level fusion up to the full eye-context capsule fusion.
enum class Variant { TwoStreamCnn, TwoStreamCnnContextCap, TwoStreamCnnTwoStreamCap, Full };

std::string to_string(Preset p);
std::string to_string(Variant v);
Preset parse_preset(const std::string& s);
Variant parse_variant(const std::string& s);
inline constexpr Variant kAllVariants[] = {Variant::TwoStreamCnn, Variant::TwoStreamCnnContextCap,
                                           Variant::TwoStreamCnnTwoStreamCap, Variant::Full};

inline constexpr int kNumClasses = 2;
inline constexpr int kOutOfFocus = 0;
inline constexpr int kOnfocus = 1;

struct ModelConfig {
  Preset preset = Preset::DESK;
  cnn::BackboneConfig backbone = cnn::BackboneConfig::desk();
  int n_p = 64;
  int n_t_stream = 4;
  int n_t_ec = 4;
  int k = 3;
  int stride_stream = 1;
  int stride_ec = 1;
  bool use_maxpool_after_cnn = false;
  mining::RegionStrategy region_strategy;
  // lambda = 1 saturates the MDL logistic at these capsule counts; three
  // rounds make the assignments too sharp to train from scratch at 32 px.
  caps::RoutingConfig routing{.iterations = 2, .lambda_initial = 0.01};
  double loss_alpha = 1.0;
  Variant variant = Variant::Full;

  static ModelConfig hf();
  static ModelConfig pf();
  static ModelConfig desk();
  static ModelConfig for_preset(Preset p);

  /// Every violated constraint, empty when consistent.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;

  /// Capsule grid extents along the pipeline.
  int feature_extent() const;         // backbone output
  int primary_extent() const;         // after the optional max-pool
  int stream_caps_extent() const;     // after the stream conv-capsule layer
  int ec_kernel() const;              // min(k, stream_caps_extent)
  int ec_caps_extent() const;

  KeyValues to_key_values() const;
  /// Applies one `key = value`; `preset` resets every field to the preset first.
  void apply(const std::string& key, const std::string& value);
  static std::vector<std::string> keys();
};

/// Header text of a model checkpoint.
std::string serialize(const ModelConfig& cfg);
ModelConfig deserialize_model_config(const std::string& text);

/// Forward products for a batch.
struct BatchOutput {
  ad::Var class_scores;                 // [N,2] fused class scores
  ad::Var cam_logits;                   // [N,2] context GAP+FC head
  std::vector<ad::Var> capsule_heads;   // [N,2] class-capsule activations (spread loss)
  std::vector<ad::Var> logit_heads;     // [N,2] extra CNN stream logits (cross-entropy)
  std::vector<cnn::Cam> cams;
  std::vector<mining::BBox> boxes;
  std::vector<bool> fallback;

  std::size_t batch() const { return class_scores.shape()[0]; }
  /// Argmax of the class scores; ties go to class 0 (out of focus).
  std::vector<int> predictions() const;
};

struct ModelOutput {
  Array class_activations;  // [2]
  Array cam_logits;         // [2]
  cnn::Cam cam;
  mining::BBox eye_region_bbox;
  bool fallback = false;
  int prediction = 0;
};

int argmax_class(double score_out_of_focus, double score_onfocus);

class EciinModel {
 public:
  explicit EciinModel(ModelConfig cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  std::size_t capsule_parameter_count() const;

  /// images [N, 3, S, S] with values in [0,1].
  BatchOutput forward(const Array& images) const;
  /// Single image [3, S, S].
  ModelOutput forward_full(const Array& image) const;

  /// Loads conv weights from an archive into one stream's backbone.
  /// Entry names "<from_prefix>stageX.convY.weight|bias" are matched.
  std::size_t import_backbone(const TensorMap& tensors, const std::string& from_prefix, bool eye_stream);

 private:
  struct Stream {
    cnn::Backbone cnn;
    std::optional<caps::PrimaryCapsules> primary;
    std::optional<caps::ConvCapsules> conv;
    std::optional<caps::ClassCapsules> classes;  // per-stream class capsules (decision-level variants)
  };

  caps::CapsuleTensor stream_capsules(const Stream& s, const ad::Var& features) const;
  ad::Var pooled(const ad::Var& features) const;

  ModelConfig cfg_;
  ParameterSet params_;
  Stream context_, eye_;
  cnn::CamHead cam_head_;
  std::optional<cnn::CamHead> eye_head_;
  std::optional<caps::ConvCapsules> ec_conv_;
  std::optional<caps::ClassCapsules> ec_classes_;
};

/// L = spread(class capsules, m) + loss_alpha * CE(cam logits) [+ CE of extra CNN stream heads].
ad::Var total_loss(const BatchOutput& out, const std::vector<int>& labels, double margin, double loss_alpha);

/// Alias of EciinModel(cfg with variant) kept for the ablation tooling.
EciinModel build_ablation(ModelConfig cfg, Variant variant, std::uint64_t seed = 0);

void save_model(const std::filesystem::path& path, const EciinModel& model);
EciinModel load_model(const std::filesystem::path& path);

}  // namespace eciin::model
