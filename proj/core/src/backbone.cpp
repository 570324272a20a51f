#include "eciin/backbone.hpp"

#include <algorithm>
#include <cmath>

#include "eciin/errors.hpp"

namespace eciin::cnn {

void BackboneConfig::validate() const {
  if (stage_channels.empty()) throw ConfigError("backbone: at least one stage required");
  if (stage_channels.size() != convs_per_stage.size()) {
    throw ConfigError("backbone: stage_channels has " + std::to_string(stage_channels.size()) +
                      " entries but convs_per_stage has " + std::to_string(convs_per_stage.size()));
  }
  for (std::size_t s = 0; s < stages(); ++s) {
    if (stage_channels[s] < 1) throw ConfigError("backbone: stage " + std::to_string(s) + " has no channels");
    if (convs_per_stage[s] < 1) throw ConfigError("backbone: stage " + std::to_string(s) + " has no convolutions");
  }
  if (input_channels < 1) throw ConfigError("backbone: input_channels must be >= 1");
  const int factor = 1 << stages();
  if (input_size < factor || input_size % factor != 0) {
    throw ConfigError("backbone: input size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(stages()) + " = " + std::to_string(factor));
  }
}

BackboneConfig BackboneConfig::vgg16(int input_size) {
  return {{64, 128, 256, 512, 512}, {2, 2, 3, 3, 3}, input_size, 3};
}

BackboneConfig BackboneConfig::desk(int input_size) { return {{32, 64, 64}, {1, 1, 1}, input_size, 3}; }

std::string Backbone::conv_name(const std::string& prefix, std::size_t stage, std::size_t conv) {
  return prefix + "stage" + std::to_string(stage + 1) + ".conv" + std::to_string(conv + 1);
}

Backbone::Backbone(const BackboneConfig& cfg, ParameterSet& params, const std::string& prefix, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = static_cast<std::size_t>(cfg_.input_channels);
  for (std::size_t s = 0; s < cfg_.stages(); ++s) {
    std::vector<Conv> convs;
    const auto out = static_cast<std::size_t>(cfg_.stage_channels[s]);
    for (int c = 0; c < cfg_.convs_per_stage[s]; ++c) {
      const std::string name = conv_name(prefix, s, static_cast<std::size_t>(c));
      Conv conv;
      conv.weight = params.add(name + ".weight", he_normal({out, in, 3, 3}, in * 9, rng));
      conv.bias = params.add(name + ".bias", Array({out}, 0.0));
      convs.push_back(conv);
      in = out;
    }
    stages_.push_back(std::move(convs));
  }
}

ad::Var Backbone::forward(const ad::Var& image) const {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(cfg_.input_channels) ||
      s[2] != static_cast<std::size_t>(cfg_.input_size) || s[3] != static_cast<std::size_t>(cfg_.input_size)) {
    throw ConfigError("backbone: expected input [N," + std::to_string(cfg_.input_channels) + "," +
                      std::to_string(cfg_.input_size) + "," + std::to_string(cfg_.input_size) + "], got " +
                      shape_str(s));
  }
  ad::Var x = image;
  for (const auto& stage : stages_) {
    for (const auto& conv : stage) x = ops::relu(ops::conv2d(x, conv.weight, conv.bias, 1, 1));
    x = ops::maxpool2d(x, 2, 2);
  }
  return x;
}

CamHead::CamHead(int channels, int classes, ParameterSet& params, const std::string& prefix, Rng& rng) {
  const auto c = static_cast<std::size_t>(channels), k = static_cast<std::size_t>(classes);
  weight_ = params.add(prefix + "weight", normal_array({c, k}, 0.0, 1.0 / std::sqrt(static_cast<double>(c)), rng));
  bias_ = params.add(prefix + "bias", Array({k}, 0.0));
}

ad::Var CamHead::forward(const ad::Var& features) const {
  if (features.shape().size() != 4 || features.shape()[1] != weight_.shape()[0]) {
    throw ConfigError("cam head: features " + shape_str(features.shape()) + " do not match head weight " +
                      shape_str(weight_.shape()));
  }
  return ops::dense(ops::global_average_pool(features), weight_, bias_);
}

Array cam_raw(const Array& features, const Array& head_weights, int class_id) {
  if (features.ndim() != 3) throw ConfigError("compute_cam: features must be [C,h,w], got " + shape_str(features.shape()));
  if (head_weights.ndim() != 2 || head_weights.dim(0) != features.dim(0)) {
    throw ConfigError("compute_cam: head weights " + shape_str(head_weights.shape()) + " do not match features " +
                      shape_str(features.shape()));
  }
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= head_weights.dim(1)) {
    throw ConfigError("compute_cam: class id " + std::to_string(class_id) + " out of range");
  }
  const std::size_t c = features.dim(0), h = features.dim(1), w = features.dim(2), k = head_weights.dim(1);
  Array raw({h, w}, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci) {
    const double wc = head_weights[ci * k + static_cast<std::size_t>(class_id)];
    for (std::size_t p = 0; p < h * w; ++p) raw[p] += wc * features[ci * h * w + p];
  }
  return raw;
}

Array minmax_normalize(const Array& map) {
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double mn = *lo, mx = *hi;
  Array out(map.shape(), 0.0);
  if (!(mx > mn)) return out;
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - mn) / (mx - mn);
  return out;
}

Cam compute_cam(const Array& features, const Array& head_weights, int class_id) {
  return {minmax_normalize(cam_raw(features, head_weights, class_id)), class_id};
}

}  // namespace eciin::cnn
