// One PASS/FAIL line per acceptance criterion; exit status is nonzero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "dropforge/cli.hpp"
#include "dropforge/gradcheck_suite.hpp"
#include "dropforge/losses.hpp"
#include "dropforge/metrics.hpp"
#include "dropforge/net.hpp"
#include "dropforge/ops.hpp"
#include "dropforge/synth.hpp"
#include "dropforge/train.hpp"
#include "oracles.hpp"

using namespace dropforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void randomize_biases(ParameterList& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& item : params.items()) {
    if (item.value.rank() != 1) continue;
    for (auto& v : item.value.mutable_data()) v = rng.uniform(-0.3, 0.3);
  }
}

std::vector<double> bias_of(const ParameterList& params, const std::string& conv) {
  return values(params.get(conv + ".bias"));
}

double worst_row_sum_error(const Tensor& a) {
  const std::size_t n = a.dim(0), m = a.dim(1);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += a[i * m + j];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

std::vector<Triplet> cropped_clip(std::uint64_t seed) {
  auto triplets = synthesize_sequence(procedural_scene(64, 64, 5, seed), seed, SynthConfig{});
  for (auto& t : triplets) {
    t.clean = center_crop(t.clean, 32, 32);
    t.degraded = center_crop(t.degraded, 32, 32);
    t.mask = center_crop(t.mask, 32, 32);
  }
  return triplets;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Outcome gradients() {
  Outcome o;
  const auto t0 = Clock::now();
  GradCheckSuiteOptions opts;
  opts.network = gradcheck_network_config();
  const auto rows = run_gradcheck_suite(opts);
  double worst = 0.0;
  for (const auto& r : rows) {
    o.require(r.max_rel_error < 1e-4, r.name + " rel err " + fmt("%.3g", r.max_rel_error));
    worst = std::max(worst, r.max_rel_error);
  }
  const bool has_network = std::any_of(rows.begin(), rows.end(), [](const auto& r) {
    return r.name.find("network") != std::string::npos;
  });
  o.require(has_network, "suite has no end-to-end network row");
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, fmt("took %.1f s", secs));
  if (o.pass) o.detail = std::to_string(rows.size()) + " checks, worst " + fmt("%.3g in %.1f s", worst, secs);
  return o;
}

Outcome attention() {
  Outcome o;
  double worst = 0.0, worst_rows = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterList params;
    const Conv q = Conv::create(params, "q", 8, 8, 1, 1, 0);
    const Conv k = Conv::create(params, "k", 8, 8, 1, 1, 0, false);
    const Conv v = Conv::create(params, "v", 8, 8, 1, 1, 0);
    glorot_init(params, seed);
    randomize_biases(params, seed + 100);
    Rng rng(seed);
    const Tensor f = oracle::random_tensor({8, 4, 4}, rng, -2, 2);
    SpatialTrace trace;
    spatial_attention_block(f, q, k, v, &trace);
    const auto ref = oracle::spatial(values(f), 8, 4, 4, q.weight.data(), bias_of(params, "q"), k.weight.data(),
                                     v.weight.data(), bias_of(params, "v"));
    worst = std::max({worst, oracle::max_abs_diff(trace.pre_residual.data(), ref.output),
                      oracle::max_abs_diff(trace.attention.data(), ref.weights)});
    worst_rows = std::max(worst_rows, worst_row_sum_error(trace.attention));
  }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelConfig cfg;
    cfg.c = 4;
    cfg.H = cfg.W = 32;
    cfg.T = 2;
    cfg.mask_hidden = 4;
    cfg.disc_channels = 2;
    cfg.init_seed = seed;
    Generator g(cfg);
    randomize_biases(g.parameters(), seed + 50);
    Rng rng(seed);
    const std::vector<Tensor> feats = {oracle::random_tensor({4, 8, 8}, rng, -2, 2),
                                       oracle::random_tensor({4, 8, 8}, rng, -2, 2)};
    TemporalTrace trace;
    g.temporal_attention(feats, &trace);
    const auto& p = g.parameters();
    std::vector<std::vector<double>> small_in, large_in;
    for (const auto& f : feats) {
      const auto all = values(f);
      small_in.emplace_back(all.begin(), all.begin() + 128);
      large_in.emplace_back(all.begin() + 128, all.end());
    }
    const auto [small, small_attn] = oracle::temporal_half(
        small_in, 2, 8, 8, 2, p.get("temporal.small.query.weight").data(), bias_of(p, "temporal.small.query"),
        p.get("temporal.small.key.weight").data(), p.get("temporal.small.value.weight").data(),
        bias_of(p, "temporal.small.value"));
    const auto [large, large_attn] = oracle::temporal_half(
        large_in, 2, 8, 8, 8, p.get("temporal.large.query.weight").data(), bias_of(p, "temporal.large.query"),
        p.get("temporal.large.key.weight").data(), p.get("temporal.large.value.weight").data(),
        bias_of(p, "temporal.large.value"));
    worst = std::max({worst, oracle::max_abs_diff(trace.attention_small.data(), small_attn.weights),
                      oracle::max_abs_diff(trace.attention_large.data(), large_attn.weights)});
    for (std::size_t t = 0; t < 2; ++t) {
      std::vector<double> joined = small[t];
      joined.insert(joined.end(), large[t].begin(), large[t].end());
      worst = std::max(worst, oracle::max_abs_diff(trace.pre_residual[t].data(), joined));
    }
    worst_rows = std::max({worst_rows, worst_row_sum_error(trace.attention_small),
                           worst_row_sum_error(trace.attention_large)});
  }
  o.require(worst < 1e-10, fmt("oracle diff %.3g", worst));
  o.require(worst_rows < 1e-9, fmt("row sum error %.3g", worst_rows));
  if (o.pass) o.detail = fmt("SAB 4x4x8 and TAB T=2 8x8x4, max diff %.3g, row sum error %.3g", worst, worst_rows);
  return o;
}

Outcome synthesis() {
  Outcome o;
  const SynthConfig cfg;
  std::size_t min_drops = 1000, max_drops = 0;
  for (std::uint64_t seed = 0; seed < 100 && o.pass; ++seed) {
    const auto scene = procedural_scene(64, 64, 5, seed);
    std::vector<DropField> fields;
    const auto triplets = synthesize_sequence(scene, seed, cfg, &fields);
    const std::string tag = "seed " + std::to_string(seed) + ": ";
    o.require(triplets.size() == 5 && fields.size() == 5, tag + "sequence length");
    if (!o.pass) break;
    const std::size_t n = fields[0].drops.size();
    min_drops = std::min(min_drops, n);
    max_drops = std::max(max_drops, n);
    o.require(n >= 150 && n <= 400, tag + "drop count " + std::to_string(n));
    for (std::size_t t = 0; t < 5; ++t) {
      o.require(fields[t].drops.size() == n, tag + "drop count changed");
      if (t > 0) {
        for (std::size_t i = 0; i < n; ++i) {
          const auto& a = fields[t - 1].drops[i];
          const auto& b = fields[t].drops[i];
          o.require(std::abs(std::hypot(b.cx - a.cx, b.cy - a.cy) - 1.0) < 1e-12, tag + "drift not 1 px");
          o.require(b.blur_kernel >= a.blur_kernel, tag + "blur decreased");
        }
      }
      for (const auto& d : fields[t].drops) o.require(d.blur_kernel >= 3 && d.blur_kernel <= 21, tag + "blur range");
      const auto& tr = triplets[t];
      for (auto bit : tr.mask.bits) o.require(bit == 0 || bit == 1, tag + "mask not binary");
      for (std::size_t p = 0; p < tr.mask.bits.size(); ++p) {
        if (tr.mask.bits[p]) continue;
        for (std::size_t c = 0; c < 3; ++c)
          o.require(tr.degraded.pixels[p * 3 + c] == tr.clean.pixels[p * 3 + c], tag + "background changed");
      }
    }
    o.require(synthesize_sequence(scene, seed, cfg) == triplets, tag + "not reproducible");
  }
  if (o.pass) o.detail = "100 seeds, drops in [" + std::to_string(min_drops) + ", " + std::to_string(max_drops) + "]";
  return o;
}

Outcome schedule_and_real_step() {
  Outcome o;
  const TrainConfig defaults;
  for (long block = 0; block < 100; ++block) {
    int synthetic = 0, real = 0;
    for (long i = block * 1000; i < (block + 1) * 1000; ++i)
      (schedule(i, defaults) == Modality::Synthetic ? synthetic : real)++;
    o.require(synthetic == 900 && real == 100, "block " + std::to_string(block) + " split");
  }
  ModelConfig model;
  model.c = 8;
  model.H = model.W = 32;
  model.T = 5;
  model.mask_hidden = 4;
  model.disc_channels = 2;
  TrainConfig train;
  train.lr = 1e-3;
  Trainer trainer(model, train, LossWeights{}, 0);
  trainer.train_step(SyntheticBatch{cropped_clip(1)}, Modality::Synthetic);
  std::map<std::string, std::vector<double>> disc_before, mask_before;
  for (const auto& item : trainer.state().discriminator.parameters().items()) disc_before[item.name] = values(item.value);
  for (const auto& item : trainer.state().generator.parameters().items())
    if (item.name.rfind("mask_decoder.", 0) == 0) mask_before[item.name] = values(item.value);
  const auto real = cropped_clip(2);
  trainer.train_step(RealPair{real[0].degraded, real[0].clean}, Modality::Real);
  for (const auto& [name, before] : disc_before)
    o.require(values(trainer.state().discriminator.parameters().get(name)) == before, name + " changed");
  for (const auto& [name, before] : mask_before)
    o.require(values(trainer.state().generator.parameters().get(name)) == before, name + " changed");
  o.require(!mask_before.empty(), "no mask decoder parameters");
  if (o.pass)
    o.detail = "100 blocks of 900/100; real step left " + std::to_string(disc_before.size() + mask_before.size()) +
               " tensors bit-identical";
  return o;
}

Outcome toy_overfit() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto clip = cropped_clip(0);
  ModelConfig model;
  model.c = 32;
  model.H = model.W = 32;
  model.T = 5;
  model.mask_hidden = 16;
  model.disc_channels = 1;
  TrainConfig train;
  train.lr = 1e-3;
  train.block = 1;
  train.synth_per_block = 1;
  train.total_iters = 200;
  Trainer trainer(model, train, LossWeights{}, 0);
  const SyntheticBatch batch{clip};
  const double before = trainer.evaluate(batch).total;
  for (int i = 0; i < 200; ++i) trainer.train_step(batch, Modality::Synthetic);
  const double after = trainer.evaluate(batch).total;
  std::vector<Frame> degraded;
  for (const auto& t : clip) degraded.push_back(t.degraded);
  NoGradGuard no_grad;
  const auto out = trainer.state().generator.forward(frames_to_tensors(degraded, model));
  double psnr_clean = 0.0, psnr_degraded = 0.0;
  for (std::size_t t = 0; t < clip.size(); ++t) {
    psnr_clean += psnr(tensor_to_frame(out.cleaned[t]), clip[t].clean) / 5.0;
    psnr_degraded += psnr(clip[t].degraded, clip[t].clean) / 5.0;
  }
  const double secs = seconds_since(t0);
  o.require(after < 0.5 * before, fmt("loss ratio %.3f", after / before));
  o.require(psnr_clean > psnr_degraded, fmt("PSNR cleaned %.2f vs degraded %.2f", psnr_clean, psnr_degraded));
  o.require(secs < 600.0, fmt("took %.1f s", secs));
  o.detail = fmt("loss ratio %.3f, PSNR %.2f vs %.2f", after / before, psnr_clean, psnr_degraded) +
             fmt(" dB, %.1f s", secs);
  return o;
}

Outcome metric_oracles() {
  Outcome o;
  double worst_psnr = 0.0, worst_warp = 0.0, worst_ssim = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Frame a(40, 24, 3), b(40, 24, 3);
    for (auto& v : a.pixels) v = rng.uniform();
    for (auto& v : b.pixels) v = rng.uniform();
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) s += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
    worst_psnr = std::max(worst_psnr, std::abs(psnr(a, b) - 10.0 * std::log10(a.pixels.size() / s)));

    FrameSequence frames;
    for (int t = 0; t < 4; ++t) {
      Frame f(24, 16, 3);
      for (auto& v : f.pixels) v = rng.uniform();
      frames.push_back(f);
    }
    const int u = static_cast<int>(seed % 3) - 1, v = 1;
    FlowSet flows;
    double total = 0.0;
    int pairs = 0;
    for (int t = 0; t < 4; ++t)
      for (int k : {1, 3, 5}) {
        if (k > t) continue;
        FlowField field = FlowField::identity(24, 16);
        std::fill(field.u.begin(), field.u.end(), static_cast<double>(u));
        std::fill(field.v.begin(), field.v.end(), static_cast<double>(v));
        flows[{t, k}] = field;
        double acc = 0.0;
        long n = 0;
        for (long y = 0; y < 16; ++y)
          for (long x = 0; x < 24; ++x) {
            const long sx = x + u, sy = y + v;
            if (sx < 0 || sy < 0 || sx >= 24 || sy >= 16) continue;
            for (std::size_t c = 0; c < 3; ++c, ++n)
              acc += std::abs(frames[t].pixels[(y * 24 + x) * 3 + c] - frames[t - k].pixels[(sy * 24 + sx) * 3 + c]);
          }
        total += acc / static_cast<double>(n);
        ++pairs;
      }
    worst_warp = std::max(worst_warp, std::abs(warp_error(frames, flows) - total / pairs));
  }
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto scene = procedural_scene(256, 256, 2, seed);
    Frame noisy = scene[0];
    Rng rng(seed + 10);
    for (auto& v : noisy.pixels) v = std::clamp(v + 0.15 * rng.uniform(-1.0, 1.0), 0.0, 1.0);
    for (const Frame* b : {static_cast<const Frame*>(&noisy), &scene[1]}) {
      const auto r = ms_ssim_detailed(scene[0], *b);
      o.require(r.scales == 5, "256x256 did not use 5 scales");
      worst_ssim = std::max(worst_ssim, std::abs(r.value - oracle::ms_ssim(scene[0], *b)));
    }
    o.require(std::abs(ms_ssim(scene[0], scene[0]) - 1.0) < 1e-12, "ms_ssim(a, a) != 1");
    o.require(psnr(scene[0], scene[0]) == 99.0, "psnr(a, a) not capped");
  }
  o.require(worst_psnr < 1e-9, fmt("PSNR diff %.3g", worst_psnr));
  o.require(worst_warp < 1e-9, fmt("warp diff %.3g", worst_warp));
  o.require(worst_ssim < 1e-6, fmt("MS-SSIM diff %.3g", worst_ssim));
  if (o.pass) o.detail = fmt("PSNR %.2g, warp %.2g, MS-SSIM %.2g", worst_psnr, worst_warp, worst_ssim);
  return o;
}

Outcome loss_arithmetic() {
  Outcome o;
  const double total =
      total_frame_loss(Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0), LossWeights{}).item();
  const double bce = ops::bce(Tensor::scalar(0.5), Tensor::scalar(1.0)).item();
  o.require(total == 40.0, fmt("total %.17g", total));
  o.require(std::abs(bce - std::numbers::ln2) < 1e-12, fmt("bce %.17g", bce));
  if (o.pass) o.detail = fmt("total %.1f, |bce - ln2| = %.2g", total, std::abs(bce - std::numbers::ln2));
  return o;
}

Outcome pipeline_reproducible() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "dropforge_acceptance_pipeline";
  fs::remove_all(root);
  const std::string config = std::string(DROPFORGE_SOURCE_DIR) + "/configs/desk.json";
  std::map<std::string, std::string> trees[2];
  for (int run = 0; run < 2 && o.pass; ++run) {
    const fs::path dir = root / std::to_string(run);
    fs::create_directories(dir);
    std::ostringstream out, err;
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--config", config, "--seed", "7", "--out", (dir / "data").string()},
        {"train", "--config", config, (dir / "data").string(), "--out", (dir / "run").string()},
        {"infer", (dir / "run" / "checkpoint.bin").string(), (dir / "data" / "seq_000" / "degraded").string(), "--out",
         (dir / "infer").string()},
        {"eval", (dir / "infer" / "cleaned").string(), (dir / "data" / "seq_000" / "clean").string(), "--out",
         (dir / "metrics.json").string()},
    };
    for (const auto& args : steps) {
      const int code = run_cli(args, out, err);
      o.require(code == 0, args[0] + " exited " + std::to_string(code) + ": " + err.str());
      if (!o.pass) break;
    }
    if (o.pass) trees[run] = tree(dir);
  }
  if (o.pass) {
    o.require(trees[0].size() > 0, "no artifacts");
    for (const auto& [name, bytes] : trees[0]) {
      const auto it = trees[1].find(name);
      o.require(it != trees[1].end() && it->second == bytes, name + " differs");
    }
    o.require(trees[0].size() == trees[1].size(), "artifact sets differ");
  }
  if (o.pass) o.detail = std::to_string(trees[0].size()) + " artifacts byte-identical across two runs";
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradient checks", gradients},
      {"2 attention oracles", attention},
      {"3 synthesis invariants", synthesis},
      {"4 schedule and real-step isolation", schedule_and_real_step},
      {"5 toy overfit", toy_overfit},
      {"6 metric oracles", metric_oracles},
      {"7 loss arithmetic", loss_arithmetic},
      {"8 pipeline reproducibility", pipeline_reproducible},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    failures += !o.pass;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
