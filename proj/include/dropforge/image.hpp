#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dropforge/tensor.hpp"

namespace dropforge {

// Interleaved H x W x C frame with values in [0, 1].
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  Frame() = default;
  Frame(std::size_t w, std::size_t h, std::size_t c = 3, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

  bool same_dims(const Frame& o) const { return width == o.width && height == o.height && channels == o.channels; }
  bool operator==(const Frame&) const = default;
};

using FrameSequence = std::vector<Frame>;

// Binary H x W mask, one byte per pixel holding 0 or 1.
struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return bits[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return bits[y * width + x]; }
  std::size_t count() const;
  bool operator==(const Mask&) const = default;
};

/// H x W x C frame -> [C x H x W] tensor.
Tensor frame_to_tensor(const Frame& f);
/// [C x H x W] tensor -> frame.
Frame tensor_to_frame(const Tensor& t);
/// Mask -> [1 x H x W] tensor of 0.0 / 1.0.
Tensor mask_to_tensor(const Mask& m);

/// Rec.601 luma for RGB; single-channel frames pass through.
std::vector<double> luminance(const Frame& f);

Frame center_crop(const Frame& f, std::size_t width, std::size_t height);
Mask center_crop(const Mask& m, std::size_t width, std::size_t height);

/// Bilinear sample with coordinates clamped to the frame.
double sample_bilinear_clamped(const Frame& f, double x, double y, std::size_t c);

}  // namespace dropforge
