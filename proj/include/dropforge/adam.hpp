#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dropforge/net.hpp"

namespace dropforge {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MomentSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  bool operator==(const MomentSlot&) const = default;
};

// Moments keyed by parameter name. Each slot counts its own steps so a
// parameter that sits out an update keeps a correct bias correction.
struct OptimizerState {
  std::map<std::string, MomentSlot> slots;
  bool operator==(const OptimizerState&) const = default;
};

/// Bias-corrected Adam update of every listed parameter from its accumulated
/// gradient. Throws TrainingError naming the first parameter with a
/// non-finite gradient, before anything is modified.
void adam_step(std::span<NamedTensor> params, OptimizerState& state, const AdamConfig& cfg);

}  // namespace dropforge
