#pragma once

#include <string>
#include <vector>

#include "eciin/ops.hpp"
#include "eciin/parameters.hpp"

namespace eciin::cnn {

/// VGG-style stack: each stage is `convs_per_stage[s]` 3x3/pad-1 convolutions
/// with ReLU followed by a 2x2/stride-2 max-pool.
struct BackboneConfig {
  std::vector<int> stage_channels;
  std::vector<int> convs_per_stage;
  int input_size = 32;
  int input_channels = 3;

  std::size_t stages() const { return stage_channels.size(); }
  int output_channels() const { return stage_channels.empty() ? input_channels : stage_channels.back(); }
  int output_size() const { return input_size >> stages(); }
  void validate() const;

  /// conv1-conv5 of VGG16: 224 px in, 7x7x512 out.
  static BackboneConfig vgg16(int input_size = 224);
  /// Three single-conv stages (32, 64, 64).
  static BackboneConfig desk(int input_size = 32);
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, ParameterSet& params, const std::string& prefix, Rng& rng);

  /// [N, input_channels, S, S] -> [N, C, S / 2^stages, S / 2^stages]
  ad::Var forward(const ad::Var& image) const;
  const BackboneConfig& config() const { return cfg_; }

  /// Parameter name of stage s, conv c: "<prefix>stage<s>.conv<c>.weight" / ".bias".
  static std::string conv_name(const std::string& prefix, std::size_t stage, std::size_t conv);

 private:
  struct Conv {
    ad::Var weight, bias;
  };
  BackboneConfig cfg_;
  std::vector<std::vector<Conv>> stages_;
};

/// Global average pooling followed by a fully connected layer to class logits.
class CamHead {
 public:
  CamHead() = default;
  CamHead(int channels, int classes, ParameterSet& params, const std::string& prefix, Rng& rng);

  /// [N, C, h, w] -> logits [N, classes]
  ad::Var forward(const ad::Var& features) const;
  const ad::Var& weight() const { return weight_; }
  const ad::Var& bias() const { return bias_; }

 private:
  ad::Var weight_;  // [C, classes]
  ad::Var bias_;    // [classes]
};

/// Class activation map over the feature grid, min-max normalized to [0,1].
struct Cam {
  Array grid;  // [h, w]
  int source_class = 0;

  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
};

/// Raw map sum_c head_weights[c, class_id] * features[c, y, x] before normalization.
Array cam_raw(const Array& features, const Array& head_weights, int class_id);
/// Min-max normalization; a constant map becomes all zeros.
Array minmax_normalize(const Array& map);
/// features [C, h, w], head_weights [C, classes].
Cam compute_cam(const Array& features, const Array& head_weights, int class_id);

}  // namespace eciin::cnn
