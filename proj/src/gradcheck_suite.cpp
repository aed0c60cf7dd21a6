#include "dropforge/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

#include "dropforge/grad_check.hpp"
#include "dropforge/ops.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

ModelConfig gradcheck_network_config() {
  ModelConfig cfg;
  cfg.T = 5;
  cfg.c = 8;
  cfg.H = 32;
  cfg.W = 32;
  cfg.mask_hidden = 4;
  cfg.disc_channels = 4;
  return cfg;
}

namespace {

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed) {}

  Tensor random(const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng_.uniform(lo, hi);
    return Tensor(shape, std::move(v));
  }

  // Values bounded away from zero so that relu kinks and |.| cusps stay out of
  // the finite-difference stencil.
  Tensor away_from_zero(const Shape& shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = (rng_.uniform() < 0.5 ? -1.0 : 1.0) * rng_.uniform(0.1, 1.0);
    return Tensor(shape, std::move(v));
  }

  // Scalar probe: sum(y * w) with a fixed random w, so every output element
  // contributes a distinct weight.
  Tensor probe(const Tensor& y) {
    auto it = probes_.find(y.shape());
    if (it == probes_.end()) it = probes_.emplace(y.shape(), random(y.shape())).first;
    return ops::sum(ops::mul(y, it->second));
  }

  void check(const std::string& name, const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
             std::size_t samples = 0) {
    GradCheckOptions opts;
    opts.samples = samples;
    opts.seed = rng_.next_u64();
    std::size_t coords = 0;
    for (const auto& t : inputs) coords += samples == 0 ? t.numel() : std::min(samples, t.numel());
    const auto errs = grad_check_params(loss, std::move(inputs), opts);
    rows_.push_back({name, *std::max_element(errs.begin(), errs.end()), coords});
  }

  std::vector<GradCheckRow> take() { return std::move(rows_); }

 private:
  Rng rng_;
  std::map<Shape, Tensor> probes_;
  std::vector<GradCheckRow> rows_;
};

std::vector<Tensor> values_of(const std::vector<NamedTensor>& items, const std::string& prefix = "") {
  std::vector<Tensor> out;
  for (const auto& item : items) {
    if (item.name.rfind(prefix, 0) == 0) out.push_back(item.value);
  }
  return out;
}

std::vector<Tensor> binary_masks(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
  std::vector<Tensor> out;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> v(h * w);
    for (auto& x : v) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
    out.emplace_back(Shape{1, h, w}, std::move(v));
  }
  return out;
}

void check_ops(Suite& s) {
  using namespace ops;
  {
    Tensor a = s.random({2, 3, 4}), b = s.random({2, 1, 4});
    s.check("add", [&] { return s.probe(add(a, b)); }, {a, b});
    s.check("sub", [&] { return s.probe(sub(a, b)); }, {a, b});
    s.check("mul", [&] { return s.probe(mul(a, b)); }, {a, b});
    s.check("scale", [&] { return s.probe(scale(a, -1.7)); }, {a});
    s.check("add_scalar", [&] { return s.probe(add_scalar(a, 0.3)); }, {a});
  }
  {
    Tensor x = s.random({3, 5}, -4.0, 4.0);
    s.check("sigmoid", [&] { return s.probe(sigmoid(x)); }, {x});
    Tensor r = s.away_from_zero({3, 5});
    s.check("relu", [&] { return s.probe(relu(r)); }, {r});
    s.check("softmax(axis 0)", [&] { return s.probe(softmax(x, 0)); }, {x});
    s.check("softmax(axis 1)", [&] { return s.probe(softmax(x, 1)); }, {x});
    s.check("transpose", [&] { return s.probe(transpose(x)); }, {x});
  }
  {
    Tensor a = s.random({3, 4}), b = s.random({4, 5});
    s.check("matmul", [&] { return s.probe(matmul(a, b)); }, {a, b});
  }
  {
    Tensor x = s.random({2, 6, 6}), k = s.random({3, 2, 3, 3}), b = s.random({3});
    s.check("conv2d(3x3, stride 1, pad 1)", [&] { return s.probe(conv2d(x, k, b, 1, 1)); }, {x, k, b});
    Tensor x2 = s.random({2, 8, 8}), k2 = s.random({3, 2, 4, 4}), b2 = s.random({3});
    s.check("conv2d(4x4, stride 2, pad 1)", [&] { return s.probe(conv2d(x2, k2, b2, 2, 1)); }, {x2, k2, b2});
    Tensor k1 = s.random({4, 2, 1, 1});
    s.check("conv2d(1x1, no bias)", [&] { return s.probe(conv2d(x, k1, std::nullopt, 1, 0)); }, {x, k1});
  }
  {
    Tensor x = s.random({2, 3, 4});
    s.check("upsample_nearest2x", [&] { return s.probe(upsample_nearest2x(x)); }, {x});
    s.check("reshape", [&] { return s.probe(reshape(x, {6, 4})); }, {x});
    s.check("permute", [&] { return s.probe(permute(x, {2, 0, 1})); }, {x});
    Tensor y = s.random({1, 3, 4});
    s.check("concat", [&] { return s.probe(concat({x, y})); }, {x, y});
    s.check("slice", [&] { return s.probe(slice(x, 1, 1)); }, {x});
    s.check("sum", [&] { return sum(x); }, {x});
    s.check("mean", [&] { return mean(x); }, {x});
    Tensor t = s.random({2, 3, 4});
    s.check("mse", [&] { return mse(x, t); }, {x, t});
    Tensor d = s.away_from_zero({2, 3, 4});
    Tensor zero = Tensor::zeros({2, 3, 4});
    s.check("l1", [&] { return l1(d, zero); }, {d});
    Tensor p = s.random({2, 3, 4}, 0.05, 0.95), soft = s.random({2, 3, 4}, 0.0, 1.0);
    s.check("bce", [&] { return bce(p, soft); }, {p, soft});
  }
  {
    Tensor q = s.random({6, 4}), k = s.random({6, 4}), v = s.random({6, 3});
    s.check("attend", [&] { return s.probe(attend(q, k, v, 0.5).output); }, {q, k, v});
    Tensor f = s.random({3, 4, 4});
    s.check("patches_to_tokens", [&] { return s.probe(patches_to_tokens(f, 2)); }, {f});
    Tensor tok = s.random({4, 12});
    s.check("tokens_to_patches", [&] { return s.probe(tokens_to_patches(tok, 3, 4, 4, 2)); }, {tok});
  }
}

void check_blocks(Suite& s, const GradCheckSuiteOptions& o, Rng& rng) {
  const ModelConfig& cfg = o.network;
  Generator gen(cfg);
  glorot_init(gen.parameters(), cfg.init_seed);
  // Non-zero biases so that bias gradients are exercised away from the init point.
  for (auto& item : gen.parameters().items()) {
    if (item.value.rank() == 1) {
      for (auto& v : item.value.mutable_data()) v = rng.uniform(-0.1, 0.1);
    }
  }
  const auto C = static_cast<std::size_t>(cfg.c), h = static_cast<std::size_t>(cfg.h()),
             w = static_cast<std::size_t>(cfg.w()), H = static_cast<std::size_t>(cfg.H),
             W = static_cast<std::size_t>(cfg.W), T = static_cast<std::size_t>(cfg.T);
  const std::size_t n = o.network_samples;
  const auto& items = gen.parameters().items();

  Tensor frame = s.random({3, H, W}, 0.0, 1.0);
  s.check("encode", [&] { return s.probe(gen.encode(frame)); }, {frame}, 4 * n);
  s.check("encode (parameters)", [&] { return s.probe(gen.encode(frame)); }, values_of(items, "encoder."), n);

  Tensor feat = s.random({C, h, w});
  auto pa = [&] {
    const auto out = gen.pixel_attention(feat);
    return ops::add(s.probe(out.reweighted), s.probe(out.confidence));
  };
  s.check("pixel_attention", pa, {feat}, 4 * n);
  s.check("pixel_attention (parameters)", pa, values_of(items, "pixel_attention."), n);

  auto sab = [&] { return s.probe(gen.spatial_attention(feat)); };
  s.check("spatial_attention", sab, {feat}, 4 * n);
  s.check("spatial_attention (parameters)", sab, values_of(items, "spatial."), n);

  std::vector<Tensor> feats;
  for (std::size_t t = 0; t < T; ++t) feats.push_back(s.random({C, h, w}));
  auto tab = [&] {
    const auto out = gen.temporal_attention(feats);
    Tensor acc = s.probe(out[0]);
    for (std::size_t t = 1; t < out.size(); ++t) acc = ops::add(acc, ops::scale(s.probe(out[t]), 1.0 + 0.1 * t));
    return acc;
  };
  s.check("temporal_attention", tab, feats, n);
  s.check("temporal_attention (parameters)", tab, values_of(items, "temporal."), n);

  auto dec = [&] { return s.probe(gen.decode(feat)); };
  s.check("decode", dec, {feat}, 4 * n);
  s.check("decode (parameters)", dec, values_of(items, "decoder."), n);

  Tensor conf = s.random({1, h, w}, 0.05, 0.95);
  auto mdec = [&] { return s.probe(gen.decode_mask(conf)); };
  s.check("decode_mask", mdec, {conf}, 4 * n);
  s.check("decode_mask (parameters)", mdec, values_of(items, "mask_decoder."), n);

  std::vector<Tensor> clip, gt;
  for (std::size_t t = 0; t < T; ++t) {
    clip.push_back(s.random({3, H, W}, 0.0, 1.0));
    gt.push_back(s.random({3, H, W}, 0.0, 1.0));
  }
  const auto masks = binary_masks(rng, T, H, W);

  Discriminator disc(cfg, derive_seed(cfg.init_seed, 1));
  auto d_loss = [&] { return temporal_losses(clip, gt, disc).discriminator; };
  s.check("discriminator loss (parameters)", d_loss, values_of(disc.parameters().items()), n);
  auto g_temporal = [&] { return temporal_losses(clip, gt, disc).generator; };
  s.check("temporal generator loss", g_temporal, clip, n);

  const Tensor small_mask = binary_masks(rng, 1, h, w)[0];
  s.check("mask_loss", [&] { return mask_loss(std::vector<Tensor>{conf}, std::vector<Tensor>{small_mask}); }, {conf});
  s.check("reconstruction_loss", [&] { return reconstruction_loss(clip, gt); }, clip, n);

  RandomPyramidExtractor extractor(o.seed);
  Tensor image = s.random({3, H, W}, 0.0, 1.0), target = s.random({3, H, W}, 0.0, 1.0);
  s.check("feature_matching_loss",
          [&] { return feature_matching_loss(image, target, extractor, o.weights.feature_levels); }, {image}, 4 * n);

  // Whole network under the weighted frame loss.
  auto total = [&] {
    const auto out = gen.forward(clip);
    return total_frame_loss(mask_loss(out.masks, masks), reconstruction_loss(out.cleaned, gt),
                            temporal_losses(out.cleaned, gt, disc).generator, o.weights);
  };
  s.check("network total loss (parameters)", total, values_of(items), n);
  s.check("network total loss (input frames)", total, clip, n);
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  Suite suite(options.seed);
  check_ops(suite);
  if (options.include_network) {
    options.network.validate();
    Rng rng(derive_seed(options.seed, 7));
    check_blocks(suite, options, rng);
  }
  return suite.take();
}

void print_gradcheck_table(std::ostream& os, const std::vector<GradCheckRow>& rows, double threshold) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %12s  %6s  %s\n", static_cast<int>(width), "operation", "max rel err", "coords",
                "status");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %12.3e  %6zu  %s\n", static_cast<int>(width), r.name.c_str(),
                  r.max_rel_error, r.coordinates, r.max_rel_error < threshold ? "ok" : "FAIL");
    os << buf;
  }
}

}  // namespace dropforge
