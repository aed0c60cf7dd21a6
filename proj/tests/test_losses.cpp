#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dropforge/errors.hpp"
#include "dropforge/grad_check.hpp"
#include "dropforge/losses.hpp"
#include "dropforge/ops.hpp"
#include "oracles.hpp"

using namespace dropforge;
using oracle::random_tensor;

namespace {

constexpr double kLn2 = std::numbers::ln2;

ModelConfig disc_config() {
  ModelConfig cfg;
  cfg.c = 8;
  cfg.H = cfg.W = 32;
  cfg.T = 3;
  cfg.disc_channels = 8;
  return cfg;
}

std::vector<Tensor> random_frames(std::size_t n, const Shape& shape, Rng& rng, bool grad = false) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor(shape, rng, 0.05, 0.95, grad));
  return out;
}

void zero_parameters(ParameterList& params) {
  for (auto& item : params.items())
    for (auto& v : item.value.mutable_data()) v = 0.0;
}

// Positive biases keep the relu stack live so gradients are not trivially zero.
Discriminator live_discriminator(const ModelConfig& cfg, std::uint64_t seed) {
  Discriminator disc(cfg, seed);
  for (auto& item : disc.parameters().items()) {
    if (item.value.rank() == 1)
      for (auto& v : item.value.mutable_data()) v = 0.1;
  }
  return disc;
}

bool all_zero_grad(const ParameterList& params) {
  for (const auto& item : params.items())
    for (double g : item.value.grad())
      if (g != 0.0) return false;
  return true;
}

}  // namespace

TEST(MaskLoss, HalfPredictionIsLn2) {
  const std::vector<Tensor> pred(3, Tensor::full({1, 4, 4}, 0.5));
  std::vector<Tensor> gt;
  Rng rng(0);
  for (int t = 0; t < 3; ++t) {
    Tensor m = Tensor::zeros({1, 4, 4});
    for (auto& v : m.mutable_data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    gt.push_back(m);
  }
  EXPECT_NEAR(mask_loss(pred, gt).item(), kLn2, 1e-12);
}

TEST(MaskLoss, ClampedTruthIsNearZero) {
  Mask m(4, 4);
  m.at(1, 2) = 1;
  m.at(3, 3) = 1;
  Tensor p = mask_to_tensor(m);
  for (auto& v : p.mutable_data()) v = std::clamp(v, ops::kBceEpsilon, 1.0 - ops::kBceEpsilon);
  EXPECT_LE(mask_loss({p}, std::vector<Mask>{m}).item(), 1e-6);
}

TEST(MaskLoss, MatchesDirectSummation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto pred = random_frames(4, {1, 6, 5}, rng);
    std::vector<Tensor> gt;
    double expected = 0.0;
    for (std::size_t t = 0; t < 4; ++t) {
      Tensor m = Tensor::zeros({1, 6, 5});
      for (auto& v : m.mutable_data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
      double frame = 0.0;
      for (std::size_t i = 0; i < 30; ++i) {
        const double p = pred[t][i], y = m[i];
        frame += -(y * std::log(p) + (1 - y) * std::log(1 - p));
      }
      expected += frame / 30.0;
      gt.push_back(m);
    }
    EXPECT_NEAR(mask_loss(pred, gt).item(), expected / 4.0, 1e-12);
  }
}

TEST(MaskLoss, NonBinaryTruthIsValidationError) {
  EXPECT_THROW(mask_loss({Tensor::full({1, 2, 2}, 0.5)}, {Tensor::full({1, 2, 2}, 0.5)}), ValidationError);
}

TEST(ReconstructionLoss, Examples) {
  Rng rng(1);
  const auto a = random_frames(3, {3, 4, 4}, rng);
  EXPECT_EQ(reconstruction_loss(a, a).item(), 0.0);
  const std::vector<Tensor> zeros(2, Tensor::zeros({3, 4, 4})), tenth(2, Tensor::full({3, 4, 4}, 0.1));
  EXPECT_NEAR(reconstruction_loss(tenth, zeros).item(), 0.01, 1e-15);
  EXPECT_THROW(reconstruction_loss({Tensor::zeros({3, 4, 4})}, {Tensor::zeros({3, 4, 5})}), DimensionError);
}

TEST(ReconstructionLoss, MatchesDirectSummation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto a = random_frames(5, {3, 4, 6}, rng), b = random_frames(5, {3, 4, 6}, rng);
    double expected = 0.0;
    for (std::size_t t = 0; t < 5; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < 72; ++i) s += (a[t][i] - b[t][i]) * (a[t][i] - b[t][i]);
      expected += s / 72.0;
    }
    EXPECT_NEAR(reconstruction_loss(a, b).item(), expected / 5.0, 1e-12);
  }
}

TEST(TemporalLosses, HalfDiscriminatorValues) {
  Discriminator disc(disc_config(), 0);
  zero_parameters(disc.parameters());
  Rng rng(2);
  const auto a = random_frames(3, {3, 32, 32}, rng), b = random_frames(3, {3, 32, 32}, rng);
  const auto tl = temporal_losses(a, b, disc);
  EXPECT_NEAR(tl.discriminator.item(), 2 * kLn2, 1e-12);
  EXPECT_NEAR(tl.generator.item(), kLn2, 1e-12);
}

TEST(TemporalLosses, IdenticalInputsGiveEqualTerms) {
  const Discriminator disc = live_discriminator(disc_config(), 3);
  Rng rng(4);
  const auto a = random_frames(3, {3, 32, 32}, rng);
  const auto tl = temporal_losses(a, a, disc);
  const double d = disc.forward(a).item();
  EXPECT_NEAR(tl.generator.item(), -std::log(d), 1e-12);
  EXPECT_NEAR(tl.discriminator.item(), -std::log(d) - std::log(1 - d), 1e-12);
  EXPECT_GT(d, 0.0);
  EXPECT_LT(d, 1.0);
}

TEST(TemporalLosses, DetachmentContract) {
  const ModelConfig cfg = disc_config();
  Generator gen(cfg);
  Discriminator disc = live_discriminator(cfg, 5);
  Rng rng(6);
  std::vector<Tensor> inputs = random_frames(3, {3, 32, 32}, rng), gt = random_frames(3, {3, 32, 32}, rng);
  {
    const auto out = gen.forward(inputs);
    temporal_losses(out.cleaned, gt, disc).discriminator.backward();
    EXPECT_TRUE(all_zero_grad(gen.parameters()));
    EXPECT_FALSE(all_zero_grad(disc.parameters()));
  }
  gen.parameters().zero_grad();
  disc.parameters().zero_grad();
  {
    const auto out = gen.forward(inputs);
    const auto tl = temporal_losses(out.cleaned, gt, disc);
    EXPECT_NE(tl.generator.item(), std::numbers::ln2);
    tl.generator.backward();
    EXPECT_TRUE(all_zero_grad(disc.parameters()));
    EXPECT_FALSE(all_zero_grad(gen.parameters()));
  }
}

TEST(TemporalLosses, GeneratorGradientMatchesFiniteDifferences) {
  const Discriminator disc = live_discriminator(disc_config(), 7);
  Rng rng(8);
  const auto gt = random_frames(3, {3, 32, 32}, rng);
  const auto base = random_frames(3, {3, 32, 32}, rng);
  GradCheckOptions opts;
  opts.samples = 40;
  const double err = grad_check(
      [&](const Tensor& first) {
        return temporal_losses({first, base[1], base[2]}, gt, disc).generator;
      },
      base[0], opts);
  EXPECT_LT(err, 1e-4);
}

TEST(FeatureMatching, ExamplesAndGradient) {
  const RandomPyramidExtractor extractor(0);
  ASSERT_EQ(extractor.levels(), 5u);
  Rng rng(9);
  const Tensor a = random_tensor({3, 32, 32}, rng, 0, 1), b = random_tensor({3, 32, 32}, rng, 0, 1);
  const std::vector<double> ones(5, 1.0), zeros(5, 0.0);
  EXPECT_EQ(feature_matching_loss(a, a, extractor, ones).item(), 0.0);
  EXPECT_EQ(feature_matching_loss(a, b, extractor, zeros).item(), 0.0);
  EXPECT_GT(feature_matching_loss(a, b, extractor, ones).item(), 0.0);
  EXPECT_THROW(feature_matching_loss(a, b, extractor, std::vector<double>(4, 1.0)), ConfigError);
  GradCheckOptions opts;
  opts.samples = 40;
  EXPECT_LT(grad_check([&](const Tensor& x) { return feature_matching_loss(x, b, extractor, ones); }, a, opts), 1e-4);
}

TEST(TotalFrameLoss, WeightedArithmetic) {
  const LossWeights w;
  auto total = [&](double m, double r, double t) {
    return total_frame_loss(Tensor::scalar(m), Tensor::scalar(r), Tensor::scalar(t), w).item();
  };
  EXPECT_EQ(total(1, 1, 1), 40.0);
  EXPECT_EQ(total(0, 0, 0), 0.0);
  EXPECT_NEAR(total(kLn2, 0.01, kLn2), 15 * kLn2 + 0.25, 1e-12);
  EXPECT_NEAR(total(kLn2, 0.01, kLn2), 10.6472, 1e-4);
  // Linear in each part.
  EXPECT_NEAR(total(2.5, 0, 0), 25.0, 1e-12);
  EXPECT_NEAR(total(0, 2.5, 0), 62.5, 1e-12);
  EXPECT_NEAR(total(0, 0, 2.5), 12.5, 1e-12);
}

TEST(LossWeights, NegativeRejected) {
  LossWeights w;
  w.recons = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
}
