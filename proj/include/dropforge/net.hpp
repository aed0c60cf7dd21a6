#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dropforge/tensor.hpp"

namespace dropforge {

struct ModelConfig {
  int T = 5;
  int c = 256;
  int H = 64;
  int W = 64;
  int sab_heads = 1;
  int tab_patch_small = 2;
  int tab_patch_large = 8;
  int mask_hidden = 16;
  int disc_channels = 16;
  std::uint64_t init_seed = 0;

  int h() const { return H / 4; }
  int w() const { return W / 4; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered collection of learnable tensors. Order is registration order and
// fixes both initialization and serialization order.
class ParameterList {
 public:
  Tensor add(std::string name, const Shape& shape);
  const std::vector<NamedTensor>& items() const { return items_; }
  std::vector<NamedTensor>& items() { return items_; }
  const Tensor& get(const std::string& name) const;
  std::size_t count() const;  // total scalar count
  void zero_grad();

 private:
  std::vector<NamedTensor> items_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) for kernels, zero for biases.
void glorot_init(ParameterList& params, std::uint64_t seed);

struct Conv {
  Tensor weight;
  std::optional<Tensor> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv create(ParameterList& params, const std::string& name, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t padding, bool with_bias = true);
  Tensor operator()(const Tensor& x) const;
  Conv frozen() const;  // same values, no gradient flow into the weights
};

/// Scaled dot-product attention over token rows: softmax(q k^T * scale) v.
struct AttentionResult {
  Tensor output;
  Tensor weights;
};
AttentionResult attend(const Tensor& queries, const Tensor& keys, const Tensor& values, double scale);

/// [C x h x w] -> [(h/p)(w/p) x C*p*p], tokens in raster order of patches.
Tensor patches_to_tokens(const Tensor& feature, std::size_t patch);
/// Inverse of patches_to_tokens.
Tensor tokens_to_patches(const Tensor& tokens, std::size_t channels, std::size_t h, std::size_t w,
                         std::size_t patch);

struct PixelAttentionOutput {
  Tensor reweighted;  // [c x h x w]
  Tensor confidence;  // [1 x h x w], in (0, 1)
};

struct SpatialTrace {
  Tensor pre_residual;
  Tensor attention;  // [N x N]
};

struct TemporalTrace {
  std::vector<Tensor> pre_residual;  // per frame
  Tensor attention_small;            // 2x2-patch half
  Tensor attention_large;            // 8x8-patch half
};

// Single-head self-attention over 1x1 tokens with a residual; any h x w.
Tensor spatial_attention_block(const Tensor& feature, const Conv& query, const Conv& key, const Conv& value,
                               SpatialTrace* trace = nullptr);

struct GeneratorOutput {
  std::vector<Tensor> cleaned;      // T x [3 x H x W]
  std::vector<Tensor> masks;        // T x [1 x H x W]; empty when not decoded
  std::vector<Tensor> confidences;  // T x [1 x h x w]
};

struct ForwardOptions {
  bool temporal = true;      // false skips the temporal attention block
  bool decode_masks = true;
};

// Encoder, pixel attention, spatial and temporal attention, frame decoder and
// mask decoder. Frames are [3 x H x W] tensors with values in [0, 1].
class Generator {
 public:
  explicit Generator(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParameterList& parameters() { return params_; }
  const ParameterList& parameters() const { return params_; }
  /// Parameters updated by a real-image step (everything but the mask decoder).
  std::vector<NamedTensor> image_path_parameters() const;

  Tensor encode(const Tensor& frame) const;
  PixelAttentionOutput pixel_attention(const Tensor& feature) const;
  Tensor spatial_attention(const Tensor& feature, SpatialTrace* trace = nullptr) const;
  std::vector<Tensor> temporal_attention(const std::vector<Tensor>& features, TemporalTrace* trace = nullptr) const;
  Tensor decode(const Tensor& feature) const;
  Tensor decode_mask(const Tensor& confidence) const;

  GeneratorOutput forward(const std::vector<Tensor>& frames, const ForwardOptions& options = {}) const;

 private:
  void check_feature(const Tensor& feature, const char* where) const;

  ModelConfig cfg_;
  ParameterList params_;
  Conv enc1_, enc2_, enc3_;
  Conv pa1_, pa2_;
  Conv sab_q_, sab_k_, sab_v_;
  Conv tab_small_q_, tab_small_k_, tab_small_v_;
  Conv tab_large_q_, tab_large_k_, tab_large_v_;
  Conv dec1_, dec2_, dec3_;
  Conv mdec1_, mdec2_, mdec3_;
};

}  // namespace dropforge
