#pragma once

#include <filesystem>
#include <string>

#include "dropforge/adam.hpp"
#include "dropforge/losses.hpp"
#include "dropforge/net.hpp"

namespace dropforge {

// Everything a checkpoint carries: generator and discriminator parameters plus
// both optimizers' moments.
struct ModelState {
  explicit ModelState(const ModelConfig& cfg);

  ModelConfig config;
  Generator generator;
  Discriminator discriminator;
  OptimizerState generator_opt;
  OptimizerState discriminator_opt;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): 8-byte magic "DFCKPT\0\0", u32 version, u64 length +
/// ModelConfig JSON, u64 tensor count, then per tensor: u32 name length, name,
/// u32 rank, rank x u64 extents, raw f64 values.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace dropforge
