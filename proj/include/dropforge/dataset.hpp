#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dropforge/synth.hpp"
#include "dropforge/train.hpp"

namespace dropforge {

constexpr int kManifestVersion = 1;

struct SequenceEntry {
  std::string id;
  int length = 0;
  // Relative to the dataset root.
  std::vector<std::string> clean;
  std::vector<std::string> degraded;
  std::vector<std::string> mask;
};

struct Manifest {
  int version = kManifestVersion;
  std::vector<SequenceEntry> sequences;
  SynthConfig synth;
  std::uint64_t seed = 0;
};

/// Layout: <dir>/seq_NNN/{clean,degraded,mask}/NNN.png plus <dir>/manifest.json.
Manifest save_triplets(const std::vector<std::vector<Triplet>>& sequences, const std::filesystem::path& dir,
                       const SynthConfig& synth, std::uint64_t seed);

/// Reads a dataset written by save_triplets. Masks must be binary and clean
/// must equal degraded outside the mask within 1/255.
std::vector<std::vector<Triplet>> load_triplets(const std::filesystem::path& dir, Manifest* manifest = nullptr);

/// <dir>/degraded/NNN.png paired with <dir>/clean/NNN.png by file name.
std::vector<RealPair> load_real_pairs(const std::filesystem::path& dir);

/// All *.png files in `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);
FrameSequence load_frame_dir(const std::filesystem::path& dir);

/// Numbered file name, e.g. frame_name(7) == "007.png".
std::string frame_name(std::size_t index);

/// Synthesizes cfg.num_sequences sequences of cfg.seq_len frames. Source
/// frames come from `sources` (split into consecutive chunks of seq_len) or,
/// when empty, from procedural scenes. Sequence i uses seeds derived from
/// (seed, i), so the result does not depend on `threads`.
std::vector<std::vector<Triplet>> generate_dataset(const SynthConfig& cfg, std::uint64_t seed,
                                                   const FrameSequence& sources, unsigned threads);

}  // namespace dropforge
