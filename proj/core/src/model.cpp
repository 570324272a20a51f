#include "eciin/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "eciin/errors.hpp"
#include "eciin/loss.hpp"

namespace eciin::model {

using ad::Var;

std::string to_string(Preset p) {
  switch (p) {
    case Preset::HF: return "HF";
    case Preset::PF: return "PF";
    case Preset::DESK: return "DESK";
  }
  return "?";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::TwoStreamCnn: return "2S_CNN";
    case Variant::TwoStreamCnnContextCap: return "2S_CNN+ContextCAP";
    case Variant::TwoStreamCnnTwoStreamCap: return "2S_CNN+2S_CAP";
    case Variant::Full: return "FULL";
  }
  return "?";
}

Preset parse_preset(const std::string& s) {
  if (s == "HF") return Preset::HF;
  if (s == "PF") return Preset::PF;
  if (s == "DESK") return Preset::DESK;
  throw ConfigError("preset: expected HF, PF or DESK, got '" + s + "'");
}

Variant parse_variant(const std::string& s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw ConfigError("variant: expected 2S_CNN, 2S_CNN+ContextCAP, 2S_CNN+2S_CAP or FULL, got '" + s + "'");
}

ModelConfig ModelConfig::hf() {
  ModelConfig c;
  c.preset = Preset::HF;
  c.backbone = cnn::BackboneConfig::vgg16(224);
  c.n_p = 512;
  c.n_t_stream = 32;
  c.n_t_ec = 32;
  c.k = 3;
  c.stride_stream = 2;
  c.stride_ec = 1;
  c.use_maxpool_after_cnn = false;
  c.routing.iterations = 3;
  return c;
}

ModelConfig ModelConfig::pf() {
  ModelConfig c;
  c.preset = Preset::PF;
  c.backbone = cnn::BackboneConfig::vgg16(224);
  c.n_p = 256;
  c.n_t_stream = 8;
  c.n_t_ec = 4;
  c.k = 3;
  c.stride_stream = 1;
  c.stride_ec = 1;
  c.use_maxpool_after_cnn = true;
  c.routing.iterations = 3;
  return c;
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.preset = Preset::DESK;
  c.backbone = cnn::BackboneConfig::desk(32);
  c.n_p = 64;
  c.n_t_stream = 4;
  c.n_t_ec = 4;
  c.k = 3;
  c.stride_stream = 1;
  c.stride_ec = 1;
  c.use_maxpool_after_cnn = false;
  return c;
}

ModelConfig ModelConfig::for_preset(Preset p) {
  switch (p) {
    case Preset::HF: return hf();
    case Preset::PF: return pf();
    case Preset::DESK: return desk();
  }
  return desk();
}

int ModelConfig::feature_extent() const { return backbone.output_size(); }
int ModelConfig::primary_extent() const {
  return use_maxpool_after_cnn ? (feature_extent() - 2) / 2 + 1 : feature_extent();
}
int ModelConfig::stream_caps_extent() const {
  return static_cast<int>(caps::capsule_output_extent(static_cast<std::size_t>(primary_extent()), k, stride_stream));
}
int ModelConfig::ec_kernel() const { return std::min(k, stream_caps_extent()); }
int ModelConfig::ec_caps_extent() const {
  return static_cast<int>(
      caps::capsule_output_extent(static_cast<std::size_t>(stream_caps_extent()), ec_kernel(), stride_ec));
}

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  auto check = [&v](bool ok, const std::string& msg) {
    if (!ok) v.push_back(msg);
  };
  try {
    backbone.validate();
  } catch (const ConfigError& e) {
    v.emplace_back(e.what());
  }
  check(n_p >= 16 && n_p % 16 == 0, "n_p must be a positive multiple of 16 (got " + std::to_string(n_p) + ")");
  check(n_t_stream >= 1, "n_t_stream must be >= 1");
  check(n_t_ec >= 1, "n_t_ec must be >= 1");
  check(k >= 1, "k must be >= 1");
  check(stride_stream >= 1, "stride_stream must be >= 1");
  check(stride_ec >= 1, "stride_ec must be >= 1");
  check(loss_alpha >= 0.0, "loss_alpha must be >= 0");
  try {
    routing.validate();
  } catch (const ConfigError& e) {
    v.emplace_back(e.what());
  }
  try {
    region_strategy.validate();
  } catch (const ConfigError& e) {
    v.emplace_back(e.what());
  }
  bool backbone_ok = true;
  try {
    backbone.validate();
  } catch (const ConfigError&) {
    backbone_ok = false;
  }
  if (backbone_ok && k >= 1) {
    const bool pool_ok = !use_maxpool_after_cnn || feature_extent() >= 2;
    check(pool_ok, "max-pool after the CNN block needs a feature map >= 2");
    if (pool_ok) {
      check(primary_extent() >= k, "capsule grid " + std::to_string(primary_extent()) + " is smaller than k = " +
                                       std::to_string(k));
    }
  }
  if (preset == Preset::HF) {
    check(n_p == 512, "HF preset requires n_p = 512");
    check(n_t_stream == 32, "HF preset requires n_t_stream = 32");
    check(k == 3, "HF preset requires k = 3");
    check(stride_stream == 2, "HF preset requires stride_stream = 2");
    check(stride_ec == 1, "HF preset requires stride_ec = 1");
    check(!use_maxpool_after_cnn, "HF preset has no max-pool after the CNN block");
  } else if (preset == Preset::PF) {
    check(n_p == 256, "PF preset requires n_p = 256");
    check(n_t_stream == 8, "PF preset requires n_t_stream = 8");
    check(n_t_ec == 4, "PF preset requires n_t_ec = 4");
    check(stride_stream == 1 && stride_ec == 1, "PF preset requires all capsule strides = 1");
    check(use_maxpool_after_cnn, "PF preset requires a max-pool after the CNN block");
  }
  return v;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "inconsistent model configuration:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::vector<std::string> ModelConfig::keys() {
  return {"backbone.convs_per_stage",
          "backbone.input_size",
          "backbone.stage_channels",
          "k",
          "loss_alpha",
          "n_p",
          "n_t_ec",
          "n_t_stream",
          "preset",
          "region.strategy",
          "region.threshold",
          "routing.activation_eps",
          "routing.iterations",
          "routing.lambda_growth",
          "routing.lambda_initial",
          "routing.scale_by_input_activation",
          "routing.variance_floor",
          "stride_ec",
          "stride_stream",
          "use_maxpool_after_cnn",
          "variant"};
}

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv["preset"] = to_string(preset);
  kv["variant"] = to_string(variant);
  kv["backbone.stage_channels"] = format_int_list(backbone.stage_channels);
  kv["backbone.convs_per_stage"] = format_int_list(backbone.convs_per_stage);
  kv["backbone.input_size"] = std::to_string(backbone.input_size);
  kv["n_p"] = std::to_string(n_p);
  kv["n_t_stream"] = std::to_string(n_t_stream);
  kv["n_t_ec"] = std::to_string(n_t_ec);
  kv["k"] = std::to_string(k);
  kv["stride_stream"] = std::to_string(stride_stream);
  kv["stride_ec"] = std::to_string(stride_ec);
  kv["use_maxpool_after_cnn"] = use_maxpool_after_cnn ? "true" : "false";
  kv["region.strategy"] = mining::to_string(region_strategy.kind);
  kv["region.threshold"] = format_double(region_strategy.threshold);
  kv["routing.iterations"] = std::to_string(routing.iterations);
  kv["routing.lambda_initial"] = format_double(routing.lambda_initial);
  kv["routing.lambda_growth"] = format_double(routing.lambda_growth);
  kv["routing.variance_floor"] = format_double(routing.variance_floor);
  kv["routing.scale_by_input_activation"] = routing.scale_by_input_activation ? "true" : "false";
  kv["routing.activation_eps"] = format_double(routing.activation_eps);
  kv["loss_alpha"] = format_double(loss_alpha);
  return kv;
}

void ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "preset") {
    const Variant keep_variant = variant;
    *this = for_preset(parse_preset(value));
    variant = keep_variant;
  } else if (key == "variant") {
    variant = parse_variant(value);
  } else if (key == "backbone.stage_channels") {
    backbone.stage_channels = parse_int_list(key, value);
  } else if (key == "backbone.convs_per_stage") {
    backbone.convs_per_stage = parse_int_list(key, value);
  } else if (key == "backbone.input_size") {
    backbone.input_size = parse_int(key, value);
  } else if (key == "n_p") {
    n_p = parse_int(key, value);
  } else if (key == "n_t_stream") {
    n_t_stream = parse_int(key, value);
  } else if (key == "n_t_ec") {
    n_t_ec = parse_int(key, value);
  } else if (key == "k") {
    k = parse_int(key, value);
  } else if (key == "stride_stream") {
    stride_stream = parse_int(key, value);
  } else if (key == "stride_ec") {
    stride_ec = parse_int(key, value);
  } else if (key == "use_maxpool_after_cnn") {
    use_maxpool_after_cnn = parse_bool(key, value);
  } else if (key == "region.strategy") {
    region_strategy.kind = mining::parse_strategy(value);
  } else if (key == "region.threshold") {
    region_strategy.threshold = parse_double(key, value);
  } else if (key == "routing.iterations") {
    routing.iterations = parse_int(key, value);
  } else if (key == "routing.lambda_initial") {
    routing.lambda_initial = parse_double(key, value);
  } else if (key == "routing.lambda_growth") {
    routing.lambda_growth = parse_double(key, value);
  } else if (key == "routing.variance_floor") {
    routing.variance_floor = parse_double(key, value);
  } else if (key == "routing.scale_by_input_activation") {
    routing.scale_by_input_activation = parse_bool(key, value);
  } else if (key == "routing.activation_eps") {
    routing.activation_eps = parse_double(key, value);
  } else if (key == "loss_alpha") {
    loss_alpha = parse_double(key, value);
  } else {
    throw ConfigError("unknown model key '" + key + "'");
  }
}

std::string serialize(const ModelConfig& cfg) { return format_key_values(cfg.to_key_values()); }

ModelConfig deserialize_model_config(const std::string& text) {
  KeyValues kv = parse_key_values(text);
  ModelConfig cfg;
  if (auto it = kv.find("preset"); it != kv.end()) {
    cfg.apply(it->first, it->second);
    kv.erase(it);
  }
  for (const auto& [k, v] : kv) cfg.apply(k, v);
  cfg.validate();
  return cfg;
}

std::vector<int> BatchOutput::predictions() const {
  const Array& s = class_scores.value();
  std::vector<int> out(batch());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax_class(s[i * 2], s[i * 2 + 1]);
  return out;
}

int argmax_class(double score_out_of_focus, double score_onfocus) {
  return score_onfocus > score_out_of_focus ? kOnfocus : kOutOfFocus;
}

EciinModel::EciinModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  const bool context_caps = cfg_.variant != Variant::TwoStreamCnn;
  const bool eye_caps = cfg_.variant == Variant::TwoStreamCnnTwoStreamCap || cfg_.variant == Variant::Full;
  const int feat = cfg_.backbone.output_channels();
  const int stream_in = cfg_.stream_caps_extent() * cfg_.stream_caps_extent() * cfg_.n_t_stream;

  context_.cnn = cnn::Backbone(cfg_.backbone, params_, "context.cnn.", rng);
  cam_head_ = cnn::CamHead(feat, kNumClasses, params_, "context.cam_head.", rng);

  cnn::BackboneConfig eye_cfg = cfg_.backbone;
  eye_cfg.input_channels = mining::eye_input_channels(cfg_.region_strategy.kind);
  eye_.cnn = cnn::Backbone(eye_cfg, params_, "eye.cnn.", rng);

  auto build_caps = [&](Stream& s, const std::string& prefix, bool own_classes) {
    s.primary = caps::PrimaryCapsules(feat, cfg_.n_p, params_, prefix + "primary.", rng);
    s.conv = caps::ConvCapsules(s.primary->types(), cfg_.n_t_stream, cfg_.k, cfg_.stride_stream, params_,
                                prefix + "conv_caps.", rng);
    if (own_classes) s.classes = caps::ClassCapsules(stream_in, kNumClasses, params_, prefix + "class_caps.", rng);
  };
  if (context_caps) build_caps(context_, "context.", cfg_.variant != Variant::Full);
  if (eye_caps) build_caps(eye_, "eye.", cfg_.variant != Variant::Full);
  if (!eye_caps) eye_head_ = cnn::CamHead(feat, kNumClasses, params_, "eye.head.", rng);

  if (cfg_.variant == Variant::Full) {
    ec_conv_ = caps::ConvCapsules(2 * cfg_.n_t_stream, cfg_.n_t_ec, cfg_.ec_kernel(), cfg_.stride_ec, params_,
                                  "ec.conv_caps.", rng);
    const int ec_in = cfg_.ec_caps_extent() * cfg_.ec_caps_extent() * cfg_.n_t_ec;
    ec_classes_ = caps::ClassCapsules(ec_in, kNumClasses, params_, "ec.class_caps.", rng);
  }
}

std::size_t EciinModel::capsule_parameter_count() const {
  return params_.scalar_count_matching("caps.") + params_.scalar_count_matching("primary.");
}

Var EciinModel::pooled(const Var& features) const {
  return cfg_.use_maxpool_after_cnn ? ops::maxpool2d(features, 2, 2) : features;
}

caps::CapsuleTensor EciinModel::stream_capsules(const Stream& s, const Var& features) const {
  return s.conv->forward(s.primary->forward(pooled(features)), cfg_.routing);
}

BatchOutput EciinModel::forward(const Array& images) const {
  const auto size = static_cast<std::size_t>(cfg_.backbone.input_size);
  if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != size || images.dim(3) != size) {
    throw ConfigError("model: expected images [N,3," + std::to_string(size) + "," + std::to_string(size) + "], got " +
                      shape_str(images.shape()));
  }
  const std::size_t n = images.dim(0);
  BatchOutput out;

  Var f_ctx;
  try {
    f_ctx = context_.cnn.forward(Var::constant(images));
    out.cam_logits = cam_head_.forward(f_ctx);
  } catch (const NumericError& e) {
    throw NumericError(std::string("context CNN: ") + e.what());
  }

  // Eye-region mining. The mined input is a constant: no gradient reaches the CAM.
  const std::size_t channels = f_ctx.shape()[1], fh = f_ctx.shape()[2], fw = f_ctx.shape()[3];
  const std::size_t eye_c = static_cast<std::size_t>(mining::eye_input_channels(cfg_.region_strategy.kind));
  Array eye_inputs({n, eye_c, size, size});
  const Array& logits = out.cam_logits.value();
  const Array& head_w = cam_head_.weight().value();
  const std::size_t image_len = 3 * size * size;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = argmax_class(logits[i * 2], logits[i * 2 + 1]);
    Array feat({channels, fh, fw});
    std::copy_n(f_ctx.value().data().begin() + static_cast<long>(i * channels * fh * fw), channels * fh * fw,
                feat.data().begin());
    cnn::Cam cam = cnn::compute_cam(feat, head_w, cls);
    Array image({3, size, size});
    std::copy_n(images.data().begin() + static_cast<long>(i * image_len), image_len, image.data().begin());
    mining::MinedRegion mined = mining::mine_region(image, cam, cfg_.region_strategy, size);
    std::copy(mined.input.data().begin(), mined.input.data().end(),
              eye_inputs.data().begin() + static_cast<long>(i * eye_c * size * size));
    out.cams.push_back(std::move(cam));
    out.boxes.push_back(mined.box);
    out.fallback.push_back(mined.fallback);
  }

  Var f_eye;
  try {
    f_eye = eye_.cnn.forward(Var::constant(std::move(eye_inputs)));
  } catch (const NumericError& e) {
    throw NumericError(std::string("eye CNN: ") + e.what());
  }

  auto probs = [](const Var& l) { return ops::softmax_axis(l, 1); };
  auto mean2 = [](const Var& a, const Var& b) { return ops::scale(ops::add(a, b), 0.5); };

  try {
    switch (cfg_.variant) {
      case Variant::TwoStreamCnn: {
        Var eye_logits = eye_head_->forward(f_eye);
        out.logit_heads.push_back(eye_logits);
        out.class_scores = mean2(probs(out.cam_logits), probs(eye_logits));
        break;
      }
      case Variant::TwoStreamCnnContextCap: {
        Var ctx = context_.classes->forward(stream_capsules(context_, f_ctx), cfg_.routing).activations;
        Var eye_logits = eye_head_->forward(f_eye);
        out.capsule_heads.push_back(ctx);
        out.logit_heads.push_back(eye_logits);
        out.class_scores = mean2(ctx, probs(eye_logits));
        break;
      }
      case Variant::TwoStreamCnnTwoStreamCap: {
        Var ctx = context_.classes->forward(stream_capsules(context_, f_ctx), cfg_.routing).activations;
        Var eye = eye_.classes->forward(stream_capsules(eye_, f_eye), cfg_.routing).activations;
        out.capsule_heads = {ctx, eye};
        out.class_scores = mean2(ctx, eye);
        break;
      }
      case Variant::Full: {
        caps::CapsuleTensor joint =
            caps::concat_types(stream_capsules(context_, f_ctx), stream_capsules(eye_, f_eye));
        Var acts = ec_classes_->forward(ec_conv_->forward(joint, cfg_.routing), cfg_.routing).activations;
        out.capsule_heads.push_back(acts);
        out.class_scores = acts;
        break;
      }
    }
  } catch (const RoutingError& e) {
    throw RoutingError(std::string("capsule fusion: ") + e.what());
  }
  return out;
}

ModelOutput EciinModel::forward_full(const Array& image) const {
  if (image.ndim() != 3) throw ConfigError("forward_full: expected [3,S,S], got " + shape_str(image.shape()));
  Shape batched{1};
  batched.insert(batched.end(), image.shape().begin(), image.shape().end());
  BatchOutput b = forward(image.reshaped(batched));
  ModelOutput o;
  o.class_activations = b.class_scores.value().reshaped({2});
  o.cam_logits = b.cam_logits.value().reshaped({2});
  o.cam = b.cams[0];
  o.eye_region_bbox = b.boxes[0];
  o.fallback = b.fallback[0];
  o.prediction = argmax_class(o.class_activations[0], o.class_activations[1]);
  return o;
}

std::size_t EciinModel::import_backbone(const TensorMap& tensors, const std::string& from_prefix, bool eye_stream) {
  return params_.import_prefixed(tensors, from_prefix, eye_stream ? "eye.cnn." : "context.cnn.");
}

Var total_loss(const BatchOutput& out, const std::vector<int>& labels, double margin, double loss_alpha) {
  Var loss = ops::scale(train::cross_entropy(out.cam_logits, labels), loss_alpha);
  for (const auto& h : out.capsule_heads) loss = ops::add(loss, train::spread_loss(h, labels, margin));
  for (const auto& h : out.logit_heads) loss = ops::add(loss, train::cross_entropy(h, labels));
  return loss;
}

EciinModel build_ablation(ModelConfig cfg, Variant variant, std::uint64_t seed) {
  cfg.variant = variant;
  return EciinModel(std::move(cfg), seed);
}

namespace {
constexpr char kModelMagic[8] = {'E', 'C', 'I', 'I', 'N', 'M', 'D', 'L'};
}

void save_model(const std::filesystem::path& path, const EciinModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  const std::string header = serialize(model.config());
  out.write(kModelMagic, sizeof(kModelMagic));
  const auto len = static_cast<std::uint32_t>(header.size());
  const unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                               static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(lb), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_archive(out, model.parameters().snapshot());
  if (!out) throw DataError("failed writing model to " + path.string());
}

EciinModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  char magic[8];
  unsigned char lb[4];
  if (!in.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0 || !in.read(reinterpret_cast<char*>(lb), 4)) {
    throw DataError(path.string() + " is not a model checkpoint");
  }
  const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (static_cast<std::uint32_t>(lb[3]) << 24);
  std::string header(len, '\0');
  if (!in.read(header.data(), len)) throw DataError(path.string() + ": truncated header");
  EciinModel model(deserialize_model_config(header));
  model.parameters().load(read_archive(in));
  return model;
}

}  // namespace eciin::model
