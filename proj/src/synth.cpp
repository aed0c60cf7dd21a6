#include "dropforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dropforge/errors.hpp"

namespace dropforge {

namespace {

int round_up_odd(int k) { return k % 2 == 0 ? k + 1 : k; }

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("synth config: " + what); };
  if (min_drops < 0 || min_drops > max_drops) fail("min_drops must be in [0, max_drops]");
  if (radius_min < 2.0 || radius_min > radius_max) fail("radius range must satisfy 2 <= radius_min <= radius_max");
  if (blur_init_min < 3 || blur_init_min > blur_init_max) fail("blur_init range must satisfy 3 <= min <= max");
  if (round_up_odd(blur_init_min) > blur_init_max) fail("blur_init range contains no odd size");
  if (blur_max < blur_init_max || round_up_odd(blur_max) > 21) fail("blur_max must be in [blur_init_max, 21]");
  if (blur_step < 0) fail("blur_step must be >= 0");
  if (refraction_min < 0.3 || refraction_max > 1.0 || refraction_min > refraction_max) {
    fail("refraction range must lie in [0.3, 1.0]");
  }
  if (shift_px < 0.0) fail("shift_px must be >= 0");
  if (seq_len < 1) fail("seq_len must be >= 1");
  if (num_sequences < 1) fail("num_sequences must be >= 1");
  if (width < 64 || height < 64) fail("width and height must be >= 64");
}

bool Drop::contains(double x, double y) const {
  const double dx = (x - cx) / rx;
  const double dy = (y - cy) / ry;
  return dx * dx + dy * dy <= 1.0;
}

DropField seed_drops(Rng& rng, std::size_t width, std::size_t height, const SynthConfig& cfg) {
  cfg.validate();
  if (width < 64 || height < 64) {
    throw ConfigError("seed_drops: frame must be at least 64x64, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  DropField field;
  field.width = width;
  field.height = height;
  const long count = rng.uniform_int(cfg.min_drops, cfg.max_drops);
  const int first_odd = round_up_odd(cfg.blur_init_min);
  const int odd_choices = (cfg.blur_init_max - first_odd) / 2 + 1;
  field.drops.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    Drop d;
    d.cx = rng.uniform(0.0, static_cast<double>(width));
    d.cy = rng.uniform(0.0, static_cast<double>(height));
    d.rx = rng.uniform(cfg.radius_min, cfg.radius_max);
    d.ry = rng.uniform(cfg.radius_min, cfg.radius_max);
    d.blur_kernel = first_odd + 2 * static_cast<int>(rng.uniform_int(0, odd_choices - 1));
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    d.drift_x = std::cos(angle);
    d.drift_y = std::sin(angle);
    d.refraction = rng.uniform(cfg.refraction_min, cfg.refraction_max);
    field.drops.push_back(d);
  }
  field.rng_state = rng.state();
  return field;
}

DropField advance(const DropField& field, const SynthConfig& cfg) {
  DropField next = field;
  const int blur_cap = round_up_odd(cfg.blur_max);
  for (auto& d : next.drops) {
    // A drop about to leave the frame (expanded by its own radius) bounces
    // back; the step length stays shift_px.
    const double reach = std::max(d.rx, d.ry);
    double nx = d.cx + cfg.shift_px * d.drift_x;
    double ny = d.cy + cfg.shift_px * d.drift_y;
    if (nx < -reach || nx > static_cast<double>(field.width) + reach) {
      d.drift_x = -d.drift_x;
      nx = d.cx + cfg.shift_px * d.drift_x;
    }
    if (ny < -reach || ny > static_cast<double>(field.height) + reach) {
      d.drift_y = -d.drift_y;
      ny = d.cy + cfg.shift_px * d.drift_y;
    }
    d.cx = nx;
    d.cy = ny;
    d.blur_kernel = std::min(round_up_odd(d.blur_kernel + cfg.blur_step), blur_cap);
  }
  return next;
}

double drop_appearance(const Frame& clean, const Drop& drop, long x, long y, std::size_t c) {
  x = std::clamp(x, 0L, static_cast<long>(clean.width) - 1);
  y = std::clamp(y, 0L, static_cast<long>(clean.height) - 1);
  const double ox = static_cast<double>(x) - drop.cx;
  const double oy = static_cast<double>(y) - drop.cy;
  const double d2 = (ox / drop.rx) * (ox / drop.rx) + (oy / drop.ry) * (oy / drop.ry);
  // Vertical flip about the centre, contracted towards it by 0.5 * d^2.
  const double k = 0.5 * d2;
  const double sx = drop.cx + k * ox;
  const double sy = drop.cy - k * oy;
  const double refracted = sample_bilinear_clamped(clean, sx, sy, c);
  const double background = clean.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  return background + drop.refraction * (refracted - background);
}

RenderResult render(const Frame& clean, const DropField& field) {
  RenderResult out{clean, Mask(clean.width, clean.height)};
  const long w = static_cast<long>(clean.width);
  const long h = static_cast<long>(clean.height);
  const std::size_t nc = clean.channels;

  for (const auto& d : field.drops) {
    const long x0 = std::max(0L, static_cast<long>(std::ceil(d.cx - d.rx)));
    const long x1 = std::min(w - 1, static_cast<long>(std::floor(d.cx + d.rx)));
    const long y0 = std::max(0L, static_cast<long>(std::ceil(d.cy - d.ry)));
    const long y1 = std::min(h - 1, static_cast<long>(std::floor(d.cy + d.ry)));
    if (x0 > x1 || y0 > y1) continue;

    // Appearance over the box grown by the blur radius, clamped to the frame;
    // clamped window taps land inside this buffer.
    const long r = d.blur_kernel / 2;
    const long bx0 = std::max(0L, x0 - r), bx1 = std::min(w - 1, x1 + r);
    const long by0 = std::max(0L, y0 - r), by1 = std::min(h - 1, y1 + r);
    const long bw = bx1 - bx0 + 1, bh = by1 - by0 + 1;
    std::vector<double> appearance(static_cast<std::size_t>(bw * bh) * nc);
    for (long y = by0; y <= by1; ++y) {
      for (long x = bx0; x <= bx1; ++x) {
        for (std::size_t c = 0; c < nc; ++c) {
          appearance[static_cast<std::size_t>((y - by0) * bw + (x - bx0)) * nc + c] = drop_appearance(clean, d, x, y, c);
        }
      }
    }
    auto tap = [&](long x, long y, std::size_t c) {
      x = std::clamp(x, 0L, w - 1) - bx0;
      y = std::clamp(y, 0L, h - 1) - by0;
      return appearance[static_cast<std::size_t>(y * bw + x) * nc + c];
    };

    const double norm = 1.0 / static_cast<double>(d.blur_kernel * d.blur_kernel);
    for (long y = y0; y <= y1; ++y) {
      for (long x = x0; x <= x1; ++x) {
        if (!d.contains(static_cast<double>(x), static_cast<double>(y))) continue;
        out.mask.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = 1;
        for (std::size_t c = 0; c < nc; ++c) {
          double acc = 0.0;
          for (long v = y - r; v <= y + r; ++v) {
            for (long u = x - r; u <= x + r; ++u) acc += tap(u, v, c);
          }
          out.degraded.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = acc * norm;
        }
      }
    }
  }
  return out;
}

std::vector<Triplet> synthesize_sequence(const FrameSequence& clean_frames, std::uint64_t seed,
                                         const SynthConfig& cfg, std::vector<DropField>* fields) {
  cfg.validate();
  if (clean_frames.size() != static_cast<std::size_t>(cfg.seq_len)) {
    throw ConfigError("synthesize_sequence: expected " + std::to_string(cfg.seq_len) + " frames, got " +
                      std::to_string(clean_frames.size()));
  }
  for (const auto& f : clean_frames) {
    if (!f.same_dims(clean_frames.front())) throw DimensionError("synthesize_sequence: frame dimensions differ");
  }
  Rng rng(seed);
  DropField field = seed_drops(rng, clean_frames.front().width, clean_frames.front().height, cfg);
  std::vector<Triplet> out;
  out.reserve(clean_frames.size());
  if (fields) fields->clear();
  for (std::size_t t = 0; t < clean_frames.size(); ++t) {
    if (t > 0) field = advance(field, cfg);
    auto rendered = render(clean_frames[t], field);
    out.push_back({clean_frames[t], std::move(rendered.degraded), std::move(rendered.mask)});
    if (fields) fields->push_back(field);
  }
  return out;
}

FrameSequence procedural_scene(std::size_t width, std::size_t height, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  struct Shape {
    double x, y, vx, vy, size;
    double color[3];
    bool round;
  };
  const double sky[3] = {rng.uniform(0.5, 0.8), rng.uniform(0.6, 0.85), rng.uniform(0.75, 0.95)};
  const double ground[3] = {rng.uniform(0.15, 0.35), rng.uniform(0.15, 0.35), rng.uniform(0.1, 0.3)};
  const double horizon = rng.uniform(0.35, 0.55) * static_cast<double>(height);
  const double stripe_speed = rng.uniform(0.5, 1.5);
  std::vector<Shape> shapes(4);
  for (auto& s : shapes) {
    s.x = rng.uniform(0.0, static_cast<double>(width));
    s.y = rng.uniform(horizon, static_cast<double>(height));
    s.vx = rng.uniform(-1.5, 1.5);
    s.vy = rng.uniform(-0.5, 0.5);
    s.size = rng.uniform(0.08, 0.2) * static_cast<double>(std::min(width, height));
    for (auto& c : s.color) c = rng.uniform(0.05, 0.95);
    s.round = rng.uniform() < 0.5;
  }

  FrameSequence frames;
  frames.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    Frame f(width, height, 3);
    const double tt = static_cast<double>(t);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double fy = static_cast<double>(y);
        const double fx = static_cast<double>(x);
        double rgb[3];
        if (fy < horizon) {
          const double k = fy / horizon;
          for (int c = 0; c < 3; ++c) rgb[c] = sky[c] * (1.0 - 0.3 * k);
        } else {
          // Road texture: stripes sliding sideways over time.
          const double k = (fy - horizon) / (static_cast<double>(height) - horizon);
          const double stripe = 0.5 + 0.5 * std::sin(0.35 * (fx + stripe_speed * tt) + 4.0 * k);
          for (int c = 0; c < 3; ++c) rgb[c] = ground[c] + 0.25 * k + 0.12 * stripe;
        }
        for (const auto& s : shapes) {
          const double sx = s.x + s.vx * tt;
          const double sy = s.y + s.vy * tt;
          const bool inside = s.round ? (fx - sx) * (fx - sx) + (fy - sy) * (fy - sy) <= s.size * s.size
                                      : std::abs(fx - sx) <= s.size && std::abs(fy - sy) <= 0.6 * s.size;
          if (inside) {
            for (int c = 0; c < 3; ++c) rgb[c] = s.color[c];
          }
        }
        for (std::size_t c = 0; c < 3; ++c) f.at(x, y, c) = std::clamp(rgb[c], 0.0, 1.0);
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace dropforge
