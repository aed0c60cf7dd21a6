#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dropforge/image.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

struct SynthConfig {
  int min_drops = 150;
  int max_drops = 400;
  double radius_min = 2.0;
  double radius_max = 6.0;
  // Initial blur is drawn from the odd sizes in [blur_init_min, blur_init_max].
  int blur_init_min = 3;
  int blur_init_max = 9;
  int blur_step = 4;
  int blur_max = 21;
  double refraction_min = 0.3;
  double refraction_max = 1.0;
  double shift_px = 1.0;
  int seq_len = 5;

  // Dataset generation (used by the synth command).
  int num_sequences = 4;
  int width = 64;
  int height = 64;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

struct Drop {
  double cx = 0.0;
  double cy = 0.0;
  double rx = 2.0;
  double ry = 2.0;
  int blur_kernel = 3;
  double drift_x = 1.0;
  double drift_y = 0.0;
  double refraction = 1.0;

  bool contains(double x, double y) const;
  bool operator==(const Drop&) const = default;
};

struct DropField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Drop> drops;
  std::string rng_state;

  bool operator==(const DropField&) const = default;
};

struct Triplet {
  Frame clean;
  Frame degraded;
  Mask mask;

  bool operator==(const Triplet&) const = default;
};

struct RenderResult {
  Frame degraded;
  Mask mask;
};

/// Seeds the first-frame drop field. Positions are uniform over the frame;
/// radii, blur and refraction come from the configured ranges.
DropField seed_drops(Rng& rng, std::size_t width, std::size_t height, const SynthConfig& cfg);

/// One frame of evolution: every drop moves shift_px along its own drift
/// direction and its blur kernel grows by blur_step up to blur_max (odd).
DropField advance(const DropField& field, const SynthConfig& cfg);

/// Rasterizes the drop union into a mask and replaces masked pixels with the
/// drop appearance; pixels outside every drop are copied unchanged.
RenderResult render(const Frame& clean, const DropField& field);

/// Appearance of one drop at pixel (x, y), before the caller decides whether
/// (x, y) is inside the ellipse. Exposed for tests.
double drop_appearance(const Frame& clean, const Drop& drop, long x, long y, std::size_t c);

/// Seeds, renders frame 0, then alternates advance/render. When `fields` is
/// given it receives the drop field used for every frame.
std::vector<Triplet> synthesize_sequence(const FrameSequence& clean_frames, std::uint64_t seed,
                                         const SynthConfig& cfg, std::vector<DropField>* fields = nullptr);

/// Deterministic stand-in driving scene: a horizon gradient drifting sideways
/// plus a few moving shapes.
FrameSequence procedural_scene(std::size_t width, std::size_t height, std::size_t length, std::uint64_t seed);

}  // namespace dropforge
