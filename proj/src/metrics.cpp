#include "dropforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "dropforge/errors.hpp"

namespace dropforge {

void MetricOptions::validate() const {
  if (psnr_cap <= 0) throw ConfigError("eval: psnr_cap must be > 0");
  if (window < 1 || window % 2 == 0) throw ConfigError("eval: window must be odd and >= 1");
  if (sigma <= 0) throw ConfigError("eval: sigma must be > 0");
  if (scale_weights.empty()) throw ConfigError("eval: scale_weights must not be empty");
  for (double w : scale_weights) {
    if (w < 0) throw ConfigError("eval: scale weights must be >= 0");
  }
  for (int k : warp_offsets) {
    if (k < 1) throw ConfigError("eval: warp offsets must be >= 1");
  }
}

namespace {

void require_same_dims(const Frame& a, const Frame& b, const char* what) {
  if (!a.same_dims(b)) {
    throw DimensionError(std::string(what) + ": frame shapes differ (" + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " + std::to_string(b.width) +
                         "x" + std::to_string(b.height) + "x" + std::to_string(b.channels) + ")");
  }
}

struct Plane {
  std::size_t w = 0;
  std::size_t h = 0;
  std::vector<double> v;
  double at(std::size_t x, std::size_t y) const { return v[y * w + x]; }
};

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(size));
  const int r = size / 2;
  for (int i = 0; i < size; ++i) taps[static_cast<std::size_t>(i)] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
  const double s = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= s;
  return taps;
}

// 'valid' separable filtering.
Plane filter_valid(const Plane& p, const std::vector<double>& taps) {
  const std::size_t n = taps.size();
  Plane rows{p.w - n + 1, p.h, {}};
  rows.v.assign(rows.w * rows.h, 0.0);
  for (std::size_t y = 0; y < p.h; ++y) {
    for (std::size_t x = 0; x < rows.w; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += taps[i] * p.at(x + i, y);
      rows.v[y * rows.w + x] = acc;
    }
  }
  Plane out{rows.w, p.h - n + 1, {}};
  out.v.assign(out.w * out.h, 0.0);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += taps[i] * rows.at(x, y + i);
      out.v[y * out.w + x] = acc;
    }
  }
  return out;
}

// 2x2 box average then decimation; the last row/column repeats on odd sizes.
Plane downsample(const Plane& p) {
  Plane out{(p.w + 1) / 2, (p.h + 1) / 2, {}};
  out.v.resize(out.w * out.h);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      const std::size_t x0 = 2 * x, y0 = 2 * y;
      const std::size_t x1 = std::min(x0 + 1, p.w - 1), y1 = std::min(y0 + 1, p.h - 1);
      out.v[y * out.w + x] = 0.25 * (p.at(x0, y0) + p.at(x1, y0) + p.at(x0, y1) + p.at(x1, y1));
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.w, a.h, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

struct ScaleStats {
  double luminance;
  double contrast_structure;
};

ScaleStats ssim_terms(const Plane& a, const Plane& b, const std::vector<double>& taps, double c1, double c2) {
  const Plane mu_a = filter_valid(a, taps);
  const Plane mu_b = filter_valid(b, taps);
  const Plane e_aa = filter_valid(product(a, a), taps);
  const Plane e_bb = filter_valid(product(b, b), taps);
  const Plane e_ab = filter_valid(product(a, b), taps);
  double lum = 0.0, cs = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i], mb = mu_b.v[i];
    const double var_a = e_aa.v[i] - ma * ma;
    const double var_b = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs += (2.0 * cov + c2) / (var_a + var_b + c2);
  }
  const double n = static_cast<double>(mu_a.v.size());
  return {lum / n, cs / n};
}

}  // namespace

double psnr(const Frame& a, const Frame& b, const MetricOptions& options) {
  require_same_dims(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  if (mse < 1e-10) return options.psnr_cap;
  return 10.0 * std::log10(1.0 / mse);
}

MsSsimResult ms_ssim_detailed(const Frame& a, const Frame& b, const MetricOptions& options) {
  require_same_dims(a, b, "ms_ssim");
  options.validate();
  const auto window = static_cast<std::size_t>(options.window);
  const std::size_t max_scales = options.scale_weights.size();

  // Scale s (0-based) sees roughly min_side / 2^s pixels; the window must fit.
  std::size_t side = std::min(a.width, a.height);
  std::size_t scales = 0;
  while (scales < max_scales && side >= window) {
    ++scales;
    side = (side + 1) / 2;
  }
  if (scales == 0) {
    throw DimensionError("ms_ssim: frame smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                         " window");
  }
  double weight_sum = 0.0;
  for (std::size_t s = 0; s < scales; ++s) weight_sum += options.scale_weights[s];

  const auto taps = gaussian_taps(options.window, options.sigma);
  const double c1 = options.k1 * options.k1;
  const double c2 = options.k2 * options.k2;
  Plane pa{a.width, a.height, luminance(a)};
  Plane pb{b.width, b.height, luminance(b)};
  double value = 1.0;
  for (std::size_t s = 0; s < scales; ++s) {
    const double weight = options.scale_weights[s] / weight_sum;
    const auto stats = ssim_terms(pa, pb, taps, c1, c2);
    // Negative contrast-structure means are clamped; a fractional power of a
    // negative number is undefined.
    value *= std::pow(std::max(stats.contrast_structure, 0.0), weight);
    if (s + 1 == scales) {
      value *= std::pow(std::max(stats.luminance, 0.0), weight);
    } else {
      pa = downsample(pa);
      pb = downsample(pb);
    }
  }
  return {value, static_cast<int>(scales)};
}

double ms_ssim(const Frame& a, const Frame& b, const MetricOptions& options) {
  const auto r = ms_ssim_detailed(a, b, options);
  if (static_cast<std::size_t>(r.scales) < options.scale_weights.size()) {
    std::cerr << "warning: ms_ssim: " << a.width << "x" << a.height << " frame supports only " << r.scales
              << " of " << options.scale_weights.size() << " scales\n";
  }
  return r.value;
}

FlowField FlowField::identity(std::size_t width, std::size_t height) {
  return {width, height, std::vector<double>(width * height, 0.0), std::vector<double>(width * height, 0.0)};
}

double warp_error(const FrameSequence& frames, const std::optional<FlowSet>& flows, const MetricOptions& options) {
  if (frames.empty()) return 0.0;
  for (const auto& f : frames) require_same_dims(frames.front(), f, "warp_error");
  const Frame& ref = frames.front();
  const std::size_t w = ref.width, h = ref.height, nc = ref.channels;

  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (int k : options.warp_offsets) {
      if (static_cast<std::size_t>(k) > t) continue;
      const Frame& cur = frames[t];
      const Frame& prev = frames[t - static_cast<std::size_t>(k)];
      const FlowField* flow = nullptr;
      if (flows && !flows->empty()) {
        auto it = flows->find({static_cast<int>(t), k});
        if (it == flows->end()) {
          throw DimensionError("warp_error: no flow supplied for frame " + std::to_string(t) + " offset " +
                               std::to_string(k));
        }
        flow = &it->second;
        if (flow->width != w || flow->height != h || flow->u.size() != w * h || flow->v.size() != w * h) {
          throw DimensionError("warp_error: flow shape does not match frames");
        }
      }
      double acc = 0.0;
      std::size_t count = 0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double sx = static_cast<double>(x) + (flow ? flow->u[y * w + x] : 0.0);
          const double sy = static_cast<double>(y) + (flow ? flow->v[y * w + x] : 0.0);
          if (sx < 0.0 || sy < 0.0 || sx > static_cast<double>(w - 1) || sy > static_cast<double>(h - 1)) continue;
          for (std::size_t c = 0; c < nc; ++c) {
            acc += std::abs(cur.at(x, y, c) - sample_bilinear_clamped(prev, sx, sy, c));
          }
          count += nc;
        }
      }
      if (count == 0) continue;
      total += acc / static_cast<double>(count);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

MetricReport evaluate(const FrameSequence& output, const FrameSequence& reference, const MetricOptions& options) {
  if (output.size() != reference.size() || output.empty()) {
    throw DimensionError("evaluate: sequences have " + std::to_string(output.size()) + " and " +
                         std::to_string(reference.size()) + " frames");
  }
  MetricReport report;
  for (std::size_t i = 0; i < output.size(); ++i) {
    report.psnr_per_frame.push_back(psnr(output[i], reference[i], options));
    const auto ms = ms_ssim_detailed(output[i], reference[i], options);
    report.ms_ssim_per_frame.push_back(ms.value);
    report.ms_ssim_scales = ms.scales;
  }
  const double n = static_cast<double>(output.size());
  report.psnr = std::accumulate(report.psnr_per_frame.begin(), report.psnr_per_frame.end(), 0.0) / n;
  report.ms_ssim = std::accumulate(report.ms_ssim_per_frame.begin(), report.ms_ssim_per_frame.end(), 0.0) / n;
  report.warp_error = warp_error(output, std::nullopt, options);
  return report;
}

}  // namespace dropforge
