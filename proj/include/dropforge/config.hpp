#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"

#include "dropforge/losses.hpp"
#include "dropforge/metrics.hpp"
#include "dropforge/net.hpp"
#include "dropforge/synth.hpp"
#include "dropforge/train.hpp"

namespace dropforge {

struct LossConfig {
  LossWeights weights;
  std::uint64_t extractor_seed = 0;
  bool operator==(const LossConfig&) const = default;
};

// Top-level JSON document: {"synth": {...}, "model": {...}, "train": {...},
// "loss": {...}, "eval": {...}}. Every section and key is optional; unknown
// keys are rejected.
struct Config {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  MetricOptions eval;

  void validate() const;
  bool operator==(const Config&) const = default;
};

Config parse_config(const nlohmann::json& doc);
Config load_config(const std::filesystem::path& path);
nlohmann::json to_json(const Config& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig parse_model_config(const nlohmann::json& doc);
nlohmann::json to_json(const SynthConfig& cfg);

}  // namespace dropforge
