#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "dropforge/adam.hpp"
#include "dropforge/losses.hpp"
#include "dropforge/model.hpp"
#include "dropforge/synth.hpp"

namespace dropforge {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int total_iters = 200;
  int block = 1000;
  int synth_per_block = 900;
  int T = 5;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }
  bool operator==(const TrainConfig&) const = default;
};

enum class Modality { Synthetic, Real };
const char* modality_name(Modality m);

/// Synthetic iff (iteration mod block) < synth_per_block.
Modality schedule(long iteration, const TrainConfig& cfg);

struct SyntheticBatch {
  std::vector<Triplet> triplets;
};

struct RealPair {
  Frame degraded;
  Frame clean;
};

using Batch = std::variant<SyntheticBatch, RealPair>;

struct LossReport {
  long iteration = 0;
  Modality modality = Modality::Synthetic;
  double mask = 0.0;
  double recons = 0.0;
  double temporal = 0.0;       // generator side
  double discriminator = 0.0;
  double total = 0.0;          // weighted frame total on synthetic steps
  double feature = 0.0;        // image loss on real steps
};

// One model plus its optimizers and loss configuration.
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train, const LossWeights& weights,
          std::uint64_t extractor_seed);
  Trainer(ModelState state, const TrainConfig& train, const LossWeights& weights, std::uint64_t extractor_seed);

  /// Synthetic: discriminator update, then generator update on the weighted
  /// frame loss. Real: generator update (mask decoder excluded) on the
  /// feature-matching loss with the temporal block bypassed.
  LossReport train_step(const Batch& batch, Modality modality);

  /// Loss report of the current model on a synthetic batch without updating.
  LossReport evaluate(const SyntheticBatch& batch) const;

  ModelState& state() { return state_; }
  const ModelState& state() const { return state_; }
  long iteration() const { return iteration_; }

 private:
  LossReport synthetic_step(const SyntheticBatch& batch);
  LossReport real_step(const RealPair& pair);

  ModelState state_;
  TrainConfig cfg_;
  LossWeights weights_;
  RandomPyramidExtractor extractor_;
  long iteration_ = 0;
};

/// Frames cropped to the model's H x W, as [3 x H x W] tensors.
std::vector<Tensor> frames_to_tensors(const std::vector<Frame>& frames, const ModelConfig& cfg);

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const LossReport& r);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_log;
  std::vector<LossReport> reports;
};

/// Runs cfg.total_iters iterations following the schedule, sampling batches
/// with a seeded sampler, and writes `checkpoint.bin` and `losses.csv` into
/// out_dir. Throws ConfigError before iteration 0 if a scheduled dataset is
/// empty.
TrainOutputs train_loop(Trainer& trainer, const std::vector<std::vector<Triplet>>& synthetic,
                        const std::vector<RealPair>& real, const TrainConfig& cfg,
                        const std::filesystem::path& out_dir);

}  // namespace dropforge
