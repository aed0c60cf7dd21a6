#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "dropforge/image.hpp"

namespace dropforge {

struct MetricOptions {
  double psnr_cap = 99.0;
  // MS-SSIM, after Wang, Simoncelli and Bovik's reference implementation.
  double k1 = 0.01;
  double k2 = 0.03;
  int window = 11;
  double sigma = 1.5;
  std::vector<double> scale_weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  std::vector<int> warp_offsets = {1, 3, 5};

  void validate() const;
  bool operator==(const MetricOptions&) const = default;
};

/// PSNR in dB on [0, 1] data; returns options.psnr_cap when mse < 1e-10.
double psnr(const Frame& a, const Frame& b, const MetricOptions& options = {});

struct MsSsimResult {
  double value = 1.0;
  int scales = 0;  // fewer than scale_weights.size() when the frame is small
};

/// MS-SSIM on Rec.601 luma. Small frames run fewer scales (renormalized
/// exponents) so that the window fits at the coarsest one.
MsSsimResult ms_ssim_detailed(const Frame& a, const Frame& b, const MetricOptions& options = {});
/// As above; prints one warning to stderr when scales were dropped.
double ms_ssim(const Frame& a, const Frame& b, const MetricOptions& options = {});

// Per-pixel displacement (u, v) into the earlier frame: frame t at (x, y) is
// compared with frame t-k sampled at (x + u, y + v).
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> u;
  std::vector<double> v;

  static FlowField identity(std::size_t width, std::size_t height);
};

// Keyed by (t, k): the flow from frame t to frame t - k.
using FlowSet = std::map<std::pair<int, int>, FlowField>;

/// Mean absolute difference between each frame t and frame t-k warped by the
/// flow (bilinear, samples outside the frame excluded), averaged over all
/// valid (t, k) pairs with k in options.warp_offsets. Identity flow when
/// `flows` is empty.
double warp_error(const FrameSequence& frames, const std::optional<FlowSet>& flows = std::nullopt,
                  const MetricOptions& options = {});

struct MetricReport {
  double psnr = 0.0;
  double ms_ssim = 0.0;
  double warp_error = 0.0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ms_ssim_per_frame;
  int ms_ssim_scales = 0;
};

/// Compares `output` against `reference` frame by frame; warp error is taken
/// over `output`.
MetricReport evaluate(const FrameSequence& output, const FrameSequence& reference, const MetricOptions& options = {});

}  // namespace dropforge
