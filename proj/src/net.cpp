#include "dropforge/net.hpp"

#include <cmath>

#include "dropforge/errors.hpp"
#include "dropforge/ops.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (T < 1) fail("T must be >= 1");
  if (c < 4 || c % 4 != 0) fail("c must be a positive multiple of 4");
  if (H < 32 || W < 32 || H % 32 != 0 || W % 32 != 0) fail("H and W must be positive multiples of 32");
  if (sab_heads != 1) fail("only single-head attention is supported (sab_heads = 1)");
  if (tab_patch_small < 1 || tab_patch_large < 1) fail("patch sizes must be >= 1");
  if (h() % tab_patch_small != 0 || h() % tab_patch_large != 0 || w() % tab_patch_small != 0 ||
      w() % tab_patch_large != 0) {
    fail("feature extents H/4, W/4 must be divisible by both temporal patch sizes");
  }
  if (mask_hidden < 1 || disc_channels < 1) fail("mask_hidden and disc_channels must be >= 1");
}

Tensor ParameterList::add(std::string name, const Shape& shape) {
  for (const auto& item : items_) {
    if (item.name == name) throw UsageError("duplicate parameter " + name);
  }
  Tensor t = Tensor::zeros(shape, true);
  items_.push_back({std::move(name), t});
  return t;
}

const Tensor& ParameterList::get(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return item.value;
  }
  throw UsageError("unknown parameter " + name);
}

std::size_t ParameterList::count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.value.numel();
  return n;
}

void ParameterList::zero_grad() {
  for (auto& item : items_) item.value.zero_grad();
}

void glorot_init(ParameterList& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& item : params.items()) {
    auto data = item.value.mutable_data();
    if (item.value.rank() != 4) {
      std::fill(data.begin(), data.end(), 0.0);
      continue;
    }
    const auto& s = item.value.shape();
    const double receptive = static_cast<double>(s[2] * s[3]);
    const double fan_in = static_cast<double>(s[1]) * receptive;
    const double fan_out = static_cast<double>(s[0]) * receptive;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : data) v = rng.uniform(-bound, bound);
  }
}

Conv Conv::create(ParameterList& params, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias) {
  Conv conv;
  conv.weight = params.add(name + ".weight", {out, in, kernel, kernel});
  if (with_bias) conv.bias = params.add(name + ".bias", {out});
  conv.stride = stride;
  conv.padding = padding;
  return conv;
}

Tensor Conv::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride, padding); }

Conv Conv::frozen() const {
  Conv c = *this;
  c.weight = weight.detach();
  if (bias) c.bias = bias->detach();
  return c;
}

AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values, double scale) {
  const Tensor scores = ops::scale(ops::matmul(queries, ops::transpose(keys)), scale);
  const Tensor weights = ops::softmax(scores, 1);
  return {ops::matmul(weights, values), weights};
}

Tensor patches_to_tokens(const Tensor& feature, std::size_t patch) {
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  if (h % patch != 0 || w % patch != 0) {
    throw ConfigError("patch size " + std::to_string(patch) + " does not divide feature " + shape_str(feature.shape()));
  }
  if (patch == 1) return ops::transpose(ops::reshape(feature, {c, h * w}));
  const Tensor split = ops::reshape(feature, {c, h / patch, patch, w / patch, patch});
  const Tensor grouped = ops::permute(split, {1, 3, 0, 2, 4});
  return ops::reshape(grouped, {(h / patch) * (w / patch), c * patch * patch});
}

Tensor tokens_to_patches(const Tensor& tokens, std::size_t channels, std::size_t h, std::size_t w,
                         std::size_t patch) {
  if (patch == 1) return ops::reshape(ops::transpose(tokens), {channels, h, w});
  const Tensor grouped = ops::reshape(tokens, {h / patch, w / patch, channels, patch, patch});
  const Tensor split = ops::permute(grouped, {2, 0, 3, 1, 4});
  return ops::reshape(split, {channels, h, w});
}

Generator::Generator(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto c = static_cast<std::size_t>(cfg_.c);
  const auto half = c / 2;
  const auto mh = static_cast<std::size_t>(cfg_.mask_hidden);

  enc1_ = Conv::create(params_, "encoder.conv1", 3, c / 4, 4, 2, 1);
  enc2_ = Conv::create(params_, "encoder.conv2", c / 4, c / 2, 4, 2, 1);
  enc3_ = Conv::create(params_, "encoder.conv3", c / 2, c, 3, 1, 1);
  pa1_ = Conv::create(params_, "pixel_attention.conv1", c, c / 4, 3, 1, 1);
  pa2_ = Conv::create(params_, "pixel_attention.conv2", c / 4, 1, 3, 1, 1);
  sab_q_ = Conv::create(params_, "spatial.query", c, c, 1, 1, 0);
  sab_k_ = Conv::create(params_, "spatial.key", c, c, 1, 1, 0, false);
  sab_v_ = Conv::create(params_, "spatial.value", c, c, 1, 1, 0);
  tab_small_q_ = Conv::create(params_, "temporal.small.query", half, half, 1, 1, 0);
  tab_small_k_ = Conv::create(params_, "temporal.small.key", half, half, 1, 1, 0, false);
  tab_small_v_ = Conv::create(params_, "temporal.small.value", half, half, 1, 1, 0);
  tab_large_q_ = Conv::create(params_, "temporal.large.query", half, half, 1, 1, 0);
  tab_large_k_ = Conv::create(params_, "temporal.large.key", half, half, 1, 1, 0, false);
  tab_large_v_ = Conv::create(params_, "temporal.large.value", half, half, 1, 1, 0);
  dec1_ = Conv::create(params_, "decoder.conv1", c, c / 2, 3, 1, 1);
  dec2_ = Conv::create(params_, "decoder.conv2", c / 2, c / 4, 3, 1, 1);
  dec3_ = Conv::create(params_, "decoder.conv3", c / 4, 3, 3, 1, 1);
  mdec1_ = Conv::create(params_, "mask_decoder.conv1", 1, mh, 3, 1, 1);
  mdec2_ = Conv::create(params_, "mask_decoder.conv2", mh, mh, 3, 1, 1);
  mdec3_ = Conv::create(params_, "mask_decoder.conv3", mh, 1, 3, 1, 1);
  glorot_init(params_, cfg_.init_seed);
}

std::vector<NamedTensor> Generator::image_path_parameters() const {
  std::vector<NamedTensor> out;
  for (const auto& item : params_.items()) {
    if (item.name.rfind("mask_decoder.", 0) != 0) out.push_back(item);
  }
  return out;
}

void Generator::check_feature(const Tensor& feature, const char* where) const {
  const Shape expected{static_cast<std::size_t>(cfg_.c), static_cast<std::size_t>(cfg_.h()),
                       static_cast<std::size_t>(cfg_.w())};
  if (feature.shape() != expected) {
    throw ConfigError(std::string(where) + ": feature " + shape_str(feature.shape()) + " does not match " +
                      shape_str(expected));
  }
}

Tensor Generator::encode(const Tensor& frame) const {
  const Shape expected{3, static_cast<std::size_t>(cfg_.H), static_cast<std::size_t>(cfg_.W)};
  if (frame.shape() != expected) {
    throw ConfigError("encode: frame " + shape_str(frame.shape()) + " does not match " + shape_str(expected));
  }
  Tensor x = ops::relu(enc1_(frame));
  x = ops::relu(enc2_(x));
  return ops::relu(enc3_(x));
}

PixelAttentionOutput Generator::pixel_attention(const Tensor& feature) const {
  check_feature(feature, "pixel_attention");
  const Tensor confidence = ops::sigmoid(pa2_(ops::relu(pa1_(feature))));
  return {ops::mul(confidence, feature), confidence};
}

Tensor spatial_attention_block(const Tensor& feature, const Conv& query, const Conv& key, const Conv& value,
                               SpatialTrace* trace) {
  if (feature.rank() != 3) throw DimensionError("spatial attention: expected [c x h x w], got " + shape_str(feature.shape()));
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  const Tensor q = patches_to_tokens(query(feature), 1);
  const Tensor k = patches_to_tokens(key(feature), 1);
  const Tensor v = patches_to_tokens(value(feature), 1);
  const auto fused = attend(q, k, v, 1.0 / std::sqrt(static_cast<double>(c)));
  const Tensor refined = tokens_to_patches(fused.output, c, h, w, 1);
  if (trace) {
    trace->pre_residual = refined;
    trace->attention = fused.weights;
  }
  return ops::add(refined, feature);
}

Tensor Generator::spatial_attention(const Tensor& feature, SpatialTrace* trace) const {
  check_feature(feature, "spatial_attention");
  return spatial_attention_block(feature, sab_q_, sab_k_, sab_v_, trace);
}

std::vector<Tensor> Generator::temporal_attention(const std::vector<Tensor>& features, TemporalTrace* trace) const {
  if (features.empty()) throw UsageError("temporal_attention: no frames");
  for (const auto& f : features) check_feature(f, "temporal_attention");
  const std::size_t c = features[0].dim(0), h = features[0].dim(1), w = features[0].dim(2);
  const std::size_t half = c / 2;
  const std::size_t frames = features.size();

  // One half per patch scale; tokens from all frames attend to each other.
  auto fuse_half = [&](std::size_t channel_offset, std::size_t patch, const Conv& eq, const Conv& ek,
                       const Conv& ev, Tensor* map) {
    std::vector<Tensor> qs, ks, vs;
    for (const auto& f : features) {
      const Tensor part = ops::slice(f, channel_offset, half);
      qs.push_back(patches_to_tokens(eq(part), patch));
      ks.push_back(patches_to_tokens(ek(part), patch));
      vs.push_back(patches_to_tokens(ev(part), patch));
    }
    const double volume = static_cast<double>(patch * patch * half);
    const auto fused = attend(ops::concat(qs), ops::concat(ks), ops::concat(vs), 1.0 / std::sqrt(volume));
    if (map) *map = fused.weights;
    const std::size_t per_frame = (h / patch) * (w / patch);
    std::vector<Tensor> out;
    for (std::size_t t = 0; t < frames; ++t) {
      out.push_back(tokens_to_patches(ops::slice(fused.output, t * per_frame, per_frame), half, h, w, patch));
    }
    return out;
  };

  const auto small = fuse_half(0, static_cast<std::size_t>(cfg_.tab_patch_small), tab_small_q_, tab_small_k_,
                               tab_small_v_, trace ? &trace->attention_small : nullptr);
  const auto large = fuse_half(half, static_cast<std::size_t>(cfg_.tab_patch_large), tab_large_q_, tab_large_k_,
                               tab_large_v_, trace ? &trace->attention_large : nullptr);
  std::vector<Tensor> out;
  if (trace) trace->pre_residual.clear();
  for (std::size_t t = 0; t < frames; ++t) {
    const Tensor joined = ops::concat({small[t], large[t]});
    if (trace) trace->pre_residual.push_back(joined);
    out.push_back(ops::add(joined, features[t]));
  }
  return out;
}

Tensor Generator::decode(const Tensor& feature) const {
  check_feature(feature, "decode");
  Tensor x = ops::relu(dec1_(ops::upsample_nearest2x(feature)));
  x = ops::relu(dec2_(ops::upsample_nearest2x(x)));
  return ops::sigmoid(dec3_(x));
}

Tensor Generator::decode_mask(const Tensor& confidence) const {
  const Shape expected{1, static_cast<std::size_t>(cfg_.h()), static_cast<std::size_t>(cfg_.w())};
  if (confidence.shape() != expected) {
    throw ConfigError("decode_mask: confidence " + shape_str(confidence.shape()) + " does not match " +
                      shape_str(expected));
  }
  Tensor x = ops::relu(mdec1_(ops::upsample_nearest2x(confidence)));
  x = ops::relu(mdec2_(ops::upsample_nearest2x(x)));
  return ops::sigmoid(mdec3_(x));
}

GeneratorOutput Generator::forward(const std::vector<Tensor>& frames, const ForwardOptions& options) const {
  if (options.temporal && frames.size() != static_cast<std::size_t>(cfg_.T)) {
    throw ConfigError("forward: expected " + std::to_string(cfg_.T) + " frames, got " + std::to_string(frames.size()));
  }
  if (frames.empty()) throw ConfigError("forward: no frames");
  GeneratorOutput out;
  std::vector<Tensor> refined;
  for (const auto& frame : frames) {
    const auto pa = pixel_attention(encode(frame));
    out.confidences.push_back(pa.confidence);
    refined.push_back(spatial_attention(pa.reweighted));
  }
  if (options.temporal) refined = temporal_attention(refined);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.cleaned.push_back(decode(refined[t]));
    if (options.decode_masks) out.masks.push_back(decode_mask(out.confidences[t]));
  }
  return out;
}

}  // namespace dropforge
