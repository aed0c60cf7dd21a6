#include "dropforge/losses.hpp"

#include <cmath>

#include "dropforge/errors.hpp"
#include "dropforge/ops.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

void LossWeights::validate() const {
  if (mask < 0 || recons < 0 || temporal < 0) throw ConfigError("loss weights must be >= 0");
  for (double w : feature_levels) {
    if (w < 0) throw ConfigError("feature level weights must be >= 0");
  }
}

Discriminator::Discriminator(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.disc_channels);
  const std::size_t widths[5] = {3 * static_cast<std::size_t>(cfg.T), d, 2 * d, 4 * d, 1};
  for (std::size_t i = 0; i < 4; ++i) {
    layers_.push_back(Conv::create(params_, "discriminator.conv" + std::to_string(i + 1), widths[i], widths[i + 1], 4, 2, 1));
  }
  glorot_init(params_, seed);
}

Tensor Discriminator::forward(const std::vector<Tensor>& frames, bool track_params) const {
  Tensor x = ops::concat(frames);
  if (x.dim(0) != layers_.front().weight.dim(1)) {
    throw DimensionError("discriminator: expected " + std::to_string(layers_.front().weight.dim(1)) +
                         " input channels, got " + std::to_string(x.dim(0)));
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Conv layer = track_params ? layers_[i] : layers_[i].frozen();
    x = layer(x);
    if (i + 1 < layers_.size()) x = ops::relu(x);
  }
  return ops::sigmoid(ops::mean(x));
}

RandomPyramidExtractor::RandomPyramidExtractor(std::uint64_t seed) {
  const std::size_t widths[6] = {3, 8, 16, 16, 32, 32};
  for (std::size_t i = 0; i < 5; ++i) {
    const bool first = i == 0;
    layers_.push_back(Conv::create(params_, "extractor.level" + std::to_string(i + 1), widths[i], widths[i + 1],
                                   first ? 3 : 4, first ? 1 : 2, 1));
  }
  // He-uniform keeps activations from vanishing through the relu stack.
  Rng rng(seed);
  for (auto& item : params_.items()) {
    item.value.set_requires_grad(false);
    auto data = item.value.mutable_data();
    if (item.value.rank() != 4) continue;
    const auto& s = item.value.shape();
    const double bound = std::sqrt(6.0 / static_cast<double>(s[1] * s[2] * s[3]));
    for (auto& v : data) v = rng.uniform(-bound, bound);
  }
}

std::vector<Tensor> RandomPyramidExtractor::features(const Tensor& image) const {
  std::vector<Tensor> out;
  Tensor x = image;
  for (const auto& layer : layers_) {
    x = ops::relu(layer(x));
    out.push_back(x);
  }
  return out;
}

namespace {

void check_sequences(std::size_t a, std::size_t b, const char* what) {
  if (a == 0 || a != b) {
    throw DimensionError(std::string(what) + ": sequence lengths " + std::to_string(a) + " and " + std::to_string(b));
  }
}

}  // namespace

Tensor mask_loss(const std::vector<Tensor>& pred_masks, const std::vector<Tensor>& gt_masks) {
  check_sequences(pred_masks.size(), gt_masks.size(), "mask_loss");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < pred_masks.size(); ++t) {
    for (double v : gt_masks[t].data()) {
      if (v != 0.0 && v != 1.0) throw ValidationError("mask_loss: ground-truth mask is not binary");
    }
    terms.push_back(ops::bce(pred_masks[t], gt_masks[t]));
  }
  return ops::scale(ops::sum(ops::concat(terms)), 1.0 / static_cast<double>(terms.size()));
}

Tensor mask_loss(const std::vector<Tensor>& pred_masks, const std::vector<Mask>& gt_masks) {
  std::vector<Tensor> gt;
  for (const auto& m : gt_masks) gt.push_back(mask_to_tensor(m));
  return mask_loss(pred_masks, gt);
}

Tensor reconstruction_loss(const std::vector<Tensor>& cleaned, const std::vector<Tensor>& gt) {
  check_sequences(cleaned.size(), gt.size(), "reconstruction_loss");
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < cleaned.size(); ++t) terms.push_back(ops::mse(cleaned[t], gt[t]));
  return ops::scale(ops::sum(ops::concat(terms)), 1.0 / static_cast<double>(terms.size()));
}

TemporalLosses temporal_losses(const std::vector<Tensor>& cleaned, const std::vector<Tensor>& gt,
                               const Discriminator& disc) {
  check_sequences(cleaned.size(), gt.size(), "temporal_losses");
  const Tensor one = Tensor::scalar(1.0);
  const Tensor zero = Tensor::scalar(0.0);

  std::vector<Tensor> detached;
  for (const auto& f : cleaned) detached.push_back(f.detach());
  const Tensor real_score = disc.forward(gt, true);
  const Tensor fake_score = disc.forward(detached, true);
  TemporalLosses out;
  out.discriminator = ops::add(ops::bce(real_score, one), ops::bce(fake_score, zero));
  out.generator = ops::bce(disc.forward(cleaned, false), one);
  return out;
}

Tensor feature_matching_loss(const Tensor& output, const Tensor& gt, const FeatureExtractor& extractor,
                             const std::vector<double>& level_weights) {
  if (level_weights.size() != extractor.levels()) {
    throw ConfigError("feature_matching_loss: " + std::to_string(level_weights.size()) + " weights for " +
                      std::to_string(extractor.levels()) + " extractor levels");
  }
  std::vector<Tensor> target;
  {
    NoGradGuard no_grad;
    target = extractor.features(gt.detach());
  }
  const auto produced = extractor.features(output);
  std::vector<Tensor> terms;
  for (std::size_t l = 0; l < produced.size(); ++l) {
    terms.push_back(ops::scale(ops::l1(produced[l], target[l]), level_weights[l]));
  }
  return ops::sum(ops::concat(terms));
}

Tensor total_frame_loss(const Tensor& mask, const Tensor& recons, const Tensor& temporal, const LossWeights& w) {
  return ops::add(ops::add(ops::scale(mask, w.mask), ops::scale(recons, w.recons)), ops::scale(temporal, w.temporal));
}

}  // namespace dropforge
