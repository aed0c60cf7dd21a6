#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dropforge/image.hpp"
#include "dropforge/net.hpp"
#include "dropforge/tensor.hpp"

namespace dropforge {

struct LossWeights {
  double mask = 10.0;
  double recons = 25.0;
  double temporal = 5.0;
  std::vector<double> feature_levels = std::vector<double>(5, 1.0);

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

// Video discriminator over the channel concatenation of T frames:
// four stride-2 convolutions down to a 1-channel map, spatial mean, sigmoid.
class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, std::uint64_t seed);

  ParameterList& parameters() { return params_; }
  const ParameterList& parameters() const { return params_; }

  /// Probability in (0, 1) that the sequence is real. With track_params false
  /// the parameters are treated as constants and receive no gradient.
  Tensor forward(const std::vector<Tensor>& frames, bool track_params = true) const;

 private:
  ParameterList params_;
  std::vector<Conv> layers_;
};

// Multi-level feature pyramid used by the image feature-matching loss.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t levels() const = 0;
  /// Features of a [3 x H x W] image, shallowest first.
  virtual std::vector<Tensor> features(const Tensor& image) const = 0;
};

// Fixed, non-trainable five-level conv pyramid with seeded random weights.
class RandomPyramidExtractor final : public FeatureExtractor {
 public:
  explicit RandomPyramidExtractor(std::uint64_t seed);
  std::size_t levels() const override { return layers_.size(); }
  std::vector<Tensor> features(const Tensor& image) const override;

 private:
  ParameterList params_;
  std::vector<Conv> layers_;
};

/// (1/T) sum_t BCE(pred_t, gt_t). Throws ValidationError on non-binary targets.
Tensor mask_loss(const std::vector<Tensor>& pred_masks, const std::vector<Tensor>& gt_masks);
Tensor mask_loss(const std::vector<Tensor>& pred_masks, const std::vector<Mask>& gt_masks);

/// (1/T) sum_t mean((cleaned_t - gt_t)^2)
Tensor reconstruction_loss(const std::vector<Tensor>& cleaned, const std::vector<Tensor>& gt);

struct TemporalLosses {
  Tensor generator;      // -ln D(cleaned); D's parameters held constant
  Tensor discriminator;  // -[ln D(gt) + ln(1 - D(cleaned))]; cleaned detached
};
TemporalLosses temporal_losses(const std::vector<Tensor>& cleaned, const std::vector<Tensor>& gt,
                               const Discriminator& disc);

/// sum_l w_l * mean|phi_l(output) - phi_l(gt)|; gt features carry no gradient.
Tensor feature_matching_loss(const Tensor& output, const Tensor& gt, const FeatureExtractor& extractor,
                             const std::vector<double>& level_weights);

/// w.mask * mask + w.recons * recons + w.temporal * temporal
Tensor total_frame_loss(const Tensor& mask, const Tensor& recons, const Tensor& temporal, const LossWeights& w);

}  // namespace dropforge
