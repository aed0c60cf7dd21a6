#include "dropforge/train.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "dropforge/errors.hpp"
#include "dropforge/ops.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (!(lr > 0)) fail("lr must be > 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (total_iters < 0) fail("total_iters must be >= 0");
  if (block < 1 || synth_per_block < 1 || synth_per_block > block) fail("need 0 < synth_per_block <= block");
  if (T < 1) fail("T must be >= 1");
}

const char* modality_name(Modality m) { return m == Modality::Synthetic ? "synthetic" : "real"; }

Modality schedule(long iteration, const TrainConfig& cfg) {
  if (iteration < 0) throw UsageError("schedule: negative iteration");
  return iteration % cfg.block < cfg.synth_per_block ? Modality::Synthetic : Modality::Real;
}

std::vector<Tensor> frames_to_tensors(const std::vector<Frame>& frames, const ModelConfig& cfg) {
  std::vector<Tensor> out;
  for (const auto& f : frames) {
    const auto w = static_cast<std::size_t>(cfg.W), h = static_cast<std::size_t>(cfg.H);
    if (f.channels != 3) throw DimensionError("expected RGB frames");
    out.push_back(frame_to_tensor(f.width == w && f.height == h ? f : center_crop(f, w, h)));
  }
  return out;
}

namespace {

std::vector<Tensor> masks_to_tensors(const std::vector<Mask>& masks, const ModelConfig& cfg) {
  std::vector<Tensor> out;
  for (const auto& m : masks) {
    const auto w = static_cast<std::size_t>(cfg.W), h = static_cast<std::size_t>(cfg.H);
    out.push_back(mask_to_tensor(m.width == w && m.height == h ? m : center_crop(m, w, h)));
  }
  return out;
}

struct SyntheticTensors {
  std::vector<Tensor> degraded, clean, masks;
};

SyntheticTensors unpack(const SyntheticBatch& batch, const ModelConfig& cfg) {
  if (batch.triplets.size() != static_cast<std::size_t>(cfg.T)) {
    throw UsageError("synthetic batch has " + std::to_string(batch.triplets.size()) + " triplets, model expects " +
                     std::to_string(cfg.T));
  }
  std::vector<Frame> degraded, clean;
  std::vector<Mask> masks;
  for (const auto& t : batch.triplets) {
    degraded.push_back(t.degraded);
    clean.push_back(t.clean);
    masks.push_back(t.mask);
  }
  return {frames_to_tensors(degraded, cfg), frames_to_tensors(clean, cfg), masks_to_tensors(masks, cfg)};
}

}  // namespace

Trainer::Trainer(const ModelConfig& model, const TrainConfig& train, const LossWeights& weights,
                 std::uint64_t extractor_seed)
    : Trainer(ModelState(model), train, weights, extractor_seed) {}

Trainer::Trainer(ModelState state, const TrainConfig& train, const LossWeights& weights, std::uint64_t extractor_seed)
    : state_(std::move(state)), cfg_(train), weights_(weights), extractor_(extractor_seed) {
  cfg_.validate();
  weights_.validate();
  if (cfg_.T != state_.config.T) {
    throw ConfigError("train.T (" + std::to_string(cfg_.T) + ") differs from model.T (" +
                      std::to_string(state_.config.T) + ")");
  }
}

LossReport Trainer::train_step(const Batch& batch, Modality modality) {
  LossReport report;
  if (modality == Modality::Synthetic) {
    const auto* synthetic = std::get_if<SyntheticBatch>(&batch);
    if (!synthetic) throw UsageError("train_step: synthetic modality needs a triplet sequence");
    report = synthetic_step(*synthetic);
  } else {
    const auto* pair = std::get_if<RealPair>(&batch);
    if (!pair) throw UsageError("train_step: real modality needs an image pair");
    report = real_step(*pair);
  }
  report.iteration = iteration_++;
  report.modality = modality;
  return report;
}

LossReport Trainer::synthetic_step(const SyntheticBatch& batch) {
  const auto data = unpack(batch, state_.config);
  auto& gen = state_.generator;
  auto& disc = state_.discriminator;
  gen.parameters().zero_grad();
  disc.parameters().zero_grad();

  const auto out = gen.forward(data.degraded);
  LossReport report;

  // Discriminator first; its loss sees the generator output detached.
  {
    const auto tl = temporal_losses(out.cleaned, data.clean, disc);
    tl.discriminator.backward();
    report.discriminator = tl.discriminator.item();
    adam_step(disc.parameters().items(), state_.discriminator_opt, cfg_.adam());
    disc.parameters().zero_grad();
  }

  const Tensor mask = mask_loss(out.masks, data.masks);
  const Tensor recons = reconstruction_loss(out.cleaned, data.clean);
  const Tensor temporal = temporal_losses(out.cleaned, data.clean, disc).generator;
  const Tensor total = total_frame_loss(mask, recons, temporal, weights_);
  total.backward();
  adam_step(gen.parameters().items(), state_.generator_opt, cfg_.adam());
  gen.parameters().zero_grad();

  report.mask = mask.item();
  report.recons = recons.item();
  report.temporal = temporal.item();
  report.total = total.item();
  return report;
}

LossReport Trainer::real_step(const RealPair& pair) {
  auto& gen = state_.generator;
  gen.parameters().zero_grad();
  const auto input = frames_to_tensors({pair.degraded}, state_.config);
  const auto target = frames_to_tensors({pair.clean}, state_.config);
  const auto out = gen.forward(input, {.temporal = false, .decode_masks = false});
  const Tensor loss = feature_matching_loss(out.cleaned[0], target[0], extractor_, weights_.feature_levels);
  loss.backward();
  auto params = gen.image_path_parameters();
  adam_step(params, state_.generator_opt, cfg_.adam());
  gen.parameters().zero_grad();

  LossReport report;
  report.feature = loss.item();
  return report;
}

LossReport Trainer::evaluate(const SyntheticBatch& batch) const {
  NoGradGuard no_grad;
  const auto data = unpack(batch, state_.config);
  const auto out = state_.generator.forward(data.degraded);
  const auto tl = temporal_losses(out.cleaned, data.clean, state_.discriminator);
  LossReport report;
  report.iteration = iteration_;
  const Tensor mask = mask_loss(out.masks, data.masks);
  const Tensor recons = reconstruction_loss(out.cleaned, data.clean);
  report.mask = mask.item();
  report.recons = recons.item();
  report.temporal = tl.generator.item();
  report.discriminator = tl.discriminator.item();
  report.total = total_frame_loss(mask, recons, tl.generator, weights_).item();
  return report;
}

void write_loss_header(std::ostream& os) {
  os << "iteration,modality,mask,recons,temporal,discriminator,total,feature\n";
}

void write_loss_row(std::ostream& os, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration,
                modality_name(r.modality), r.mask, r.recons, r.temporal, r.discriminator, r.total, r.feature);
  os << buf;
}

TrainOutputs train_loop(Trainer& trainer, const std::vector<std::vector<Triplet>>& synthetic,
                        const std::vector<RealPair>& real, const TrainConfig& cfg,
                        const std::filesystem::path& out_dir) {
  cfg.validate();
  bool needs_synthetic = false, needs_real = false;
  for (long i = 0; i < cfg.total_iters; ++i) {
    (schedule(i, cfg) == Modality::Synthetic ? needs_synthetic : needs_real) = true;
    if (needs_synthetic && needs_real) break;
  }
  if (needs_synthetic && synthetic.empty()) throw ConfigError("train: synthetic dataset is empty");
  if (needs_real && real.empty()) {
    throw ConfigError("train: the schedule includes real-image iterations but no real dataset was given");
  }

  std::filesystem::create_directories(out_dir);
  TrainOutputs outputs;
  outputs.checkpoint = out_dir / "checkpoint.bin";
  outputs.loss_log = out_dir / "losses.csv";
  std::ofstream log(outputs.loss_log, std::ios::binary);
  if (!log) throw LoadError("cannot write " + outputs.loss_log.string());
  write_loss_header(log);

  Rng sampler(cfg.seed);
  for (long i = 0; i < cfg.total_iters; ++i) {
    const Modality m = schedule(i, cfg);
    LossReport report;
    if (m == Modality::Synthetic) {
      const auto& seq = synthetic[sampler.uniform_index(synthetic.size())];
      report = trainer.train_step(SyntheticBatch{seq}, m);
    } else {
      report = trainer.train_step(real[sampler.uniform_index(real.size())], m);
    }
    write_loss_row(log, report);
    outputs.reports.push_back(report);
  }
  log.close();
  save_checkpoint(outputs.checkpoint, trainer.state());
  return outputs;
}

}  // namespace dropforge
