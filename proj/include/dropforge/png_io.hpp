#pragma once

#include <filesystem>

#include "dropforge/image.hpp"

namespace dropforge {

/// 8-bit PNG; RGB frames as RGB, single-channel frames as grayscale.
void write_png(const std::filesystem::path& path, const Frame& frame);
/// 8-bit grayscale PNG with values exactly 0 or 255.
void write_png(const std::filesystem::path& path, const Mask& mask);

/// Any PNG, converted to 8-bit RGB and scaled to [0, 1].
Frame read_png_rgb(const std::filesystem::path& path);
/// Grayscale PNG whose values must all be 0 or 255 (ValidationError otherwise).
Mask read_png_mask(const std::filesystem::path& path);

/// round(clamp(v, 0, 1) * 255)
std::uint8_t quantize(double v);

}  // namespace dropforge
