#include "dropforge/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dropforge/errors.hpp"

namespace dropforge {

std::size_t Mask::count() const { return std::accumulate(bits.begin(), bits.end(), std::size_t{0}); }

Tensor frame_to_tensor(const Frame& f) {
  std::vector<double> data(f.pixels.size());
  const std::size_t plane = f.width * f.height;
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) data[c * plane + i] = f.pixels[i * f.channels + c];
  }
  return Tensor({f.channels, f.height, f.width}, std::move(data));
}

Frame tensor_to_frame(const Tensor& t) {
  if (t.rank() != 3) throw DimensionError("tensor_to_frame: expected [C x H x W], got " + shape_str(t.shape()));
  Frame f(t.dim(2), t.dim(1), t.dim(0));
  const std::size_t plane = f.width * f.height;
  const auto d = t.data();
  for (std::size_t c = 0; c < f.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) f.pixels[i * f.channels + c] = d[c * plane + i];
  }
  return f;
}

Tensor mask_to_tensor(const Mask& m) {
  std::vector<double> data(m.bits.begin(), m.bits.end());
  return Tensor({1, m.height, m.width}, std::move(data));
}

std::vector<double> luminance(const Frame& f) {
  const std::size_t n = f.width * f.height;
  std::vector<double> y(n);
  if (f.channels == 1) {
    std::copy(f.pixels.begin(), f.pixels.end(), y.begin());
    return y;
  }
  if (f.channels != 3) throw DimensionError("luminance: expected 1 or 3 channels");
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 0.299 * f.pixels[3 * i] + 0.587 * f.pixels[3 * i + 1] + 0.114 * f.pixels[3 * i + 2];
  }
  return y;
}

Frame center_crop(const Frame& f, std::size_t width, std::size_t height) {
  if (width > f.width || height > f.height) {
    throw DimensionError("center_crop: " + std::to_string(f.width) + "x" + std::to_string(f.height) +
                         " frame is smaller than " + std::to_string(width) + "x" + std::to_string(height));
  }
  const std::size_t x0 = (f.width - width) / 2, y0 = (f.height - height) / 2;
  Frame out(width, height, f.channels);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < f.channels; ++c) out.at(x, y, c) = f.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

Mask center_crop(const Mask& m, std::size_t width, std::size_t height) {
  if (width > m.width || height > m.height) throw DimensionError("center_crop: mask smaller than crop");
  const std::size_t x0 = (m.width - width) / 2, y0 = (m.height - height) / 2;
  Mask out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out.at(x, y) = m.at(x0 + x, y0 + y);
  }
  return out;
}

double sample_bilinear_clamped(const Frame& f, double x, double y, std::size_t c) {
  x = std::clamp(x, 0.0, static_cast<double>(f.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(f.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, f.width - 1);
  const std::size_t y1 = std::min(y0 + 1, f.height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = f.at(x0, y0, c) + (f.at(x1, y0, c) - f.at(x0, y0, c)) * fx;
  const double bottom = f.at(x0, y1, c) + (f.at(x1, y1, c) - f.at(x0, y1, c)) * fx;
  return top + (bottom - top) * fy;
}

}  // namespace dropforge
