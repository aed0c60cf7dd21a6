#include "dropforge/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "dropforge/errors.hpp"

namespace dropforge {

namespace {

class PngImage {
 public:
  PngImage() {
    std::memset(&image_, 0, sizeof image_);
    image_.version = PNG_IMAGE_VERSION;
  }
  ~PngImage() { png_image_free(&image_); }
  PngImage(const PngImage&) = delete;
  PngImage& operator=(const PngImage&) = delete;
  png_image* get() { return &image_; }

 private:
  png_image image_;
};

void write_bytes(const std::filesystem::path& path, std::uint32_t w, std::uint32_t h, png_uint_32 format,
                 const std::vector<std::uint8_t>& bytes) {
  PngImage img;
  img.get()->width = w;
  img.get()->height = h;
  img.get()->format = format;
  if (!png_image_write_to_file(img.get(), path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw LoadError("cannot write PNG " + path.string() + ": " + img.get()->message);
  }
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path, png_uint_32 format, std::size_t& w,
                                     std::size_t& h) {
  PngImage img;
  if (!png_image_begin_read_from_file(img.get(), path.c_str())) {
    throw LoadError("cannot read PNG " + path.string() + ": " + img.get()->message);
  }
  img.get()->format = format;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(*img.get()));
  if (!png_image_finish_read(img.get(), nullptr, bytes.data(), 0, nullptr)) {
    throw LoadError("cannot decode PNG " + path.string() + ": " + img.get()->message);
  }
  w = img.get()->width;
  h = img.get()->height;
  return bytes;
}

}  // namespace

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::filesystem::path& path, const Frame& frame) {
  if (frame.channels != 1 && frame.channels != 3) throw DimensionError("write_png: expected 1 or 3 channels");
  std::vector<std::uint8_t> bytes(frame.pixels.size());
  std::transform(frame.pixels.begin(), frame.pixels.end(), bytes.begin(), quantize);
  write_bytes(path, static_cast<std::uint32_t>(frame.width), static_cast<std::uint32_t>(frame.height),
              frame.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY, bytes);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.bits.size());
  std::transform(mask.bits.begin(), mask.bits.end(), bytes.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
  write_bytes(path, static_cast<std::uint32_t>(mask.width), static_cast<std::uint32_t>(mask.height), PNG_FORMAT_GRAY,
              bytes);
}

Frame read_png_rgb(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto bytes = read_bytes(path, PNG_FORMAT_RGB, w, h);
  Frame f(w, h, 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) f.pixels[i] = bytes[i] / 255.0;
  return f;
}

Mask read_png_mask(const std::filesystem::path& path) {
  std::size_t w = 0, h = 0;
  const auto bytes = read_bytes(path, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (bytes[i] != 0 && bytes[i] != 255) {
      throw ValidationError("mask " + path.string() + " is not binary (value " + std::to_string(bytes[i]) + ")");
    }
    m.bits[i] = bytes[i] ? 1 : 0;
  }
  return m;
}

}  // namespace dropforge
