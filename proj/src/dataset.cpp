#include "dropforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "dropforge/config.hpp"
#include "dropforge/errors.hpp"
#include "dropforge/png_io.hpp"

namespace dropforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu.png", index);
  return buf;
}

namespace {

std::string sequence_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03zu", index);
  return buf;
}

void check_outside_mask(const Triplet& t, const std::string& where) {
  if (!t.clean.same_dims(t.degraded) || t.mask.width != t.clean.width || t.mask.height != t.clean.height) {
    throw ValidationError(where + ": clean, degraded and mask dimensions differ");
  }
  constexpr double tol = 1.0 / 255.0 + 1e-12;
  for (std::size_t y = 0; y < t.clean.height; ++y) {
    for (std::size_t x = 0; x < t.clean.width; ++x) {
      if (t.mask.at(x, y)) continue;
      for (std::size_t c = 0; c < t.clean.channels; ++c) {
        if (std::abs(t.clean.at(x, y, c) - t.degraded.at(x, y, c)) > tol) {
          throw ValidationError(where + ": degraded differs from clean outside the mask at (" + std::to_string(x) +
                                ", " + std::to_string(y) + ")");
        }
      }
    }
  }
}

std::vector<std::string> string_list(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_array()) throw LoadError(where + ": missing list '" + key + "'");
  return j.at(key).get<std::vector<std::string>>();
}

}  // namespace

Manifest save_triplets(const std::vector<std::vector<Triplet>>& sequences, const fs::path& dir,
                       const SynthConfig& synth, std::uint64_t seed) {
  Manifest manifest;
  manifest.synth = synth;
  manifest.seed = seed;
  fs::create_directories(dir);
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    SequenceEntry entry;
    entry.id = sequence_id(s);
    entry.length = static_cast<int>(sequences[s].size());
    for (const char* sub : {"clean", "degraded", "mask"}) fs::create_directories(dir / entry.id / sub);
    for (std::size_t i = 0; i < sequences[s].size(); ++i) {
      const auto& t = sequences[s][i];
      const std::string name = frame_name(i);
      entry.clean.push_back(entry.id + "/clean/" + name);
      entry.degraded.push_back(entry.id + "/degraded/" + name);
      entry.mask.push_back(entry.id + "/mask/" + name);
      write_png(dir / entry.clean.back(), t.clean);
      write_png(dir / entry.degraded.back(), t.degraded);
      write_png(dir / entry.mask.back(), t.mask);
    }
    manifest.sequences.push_back(std::move(entry));
  }

  json seqs = json::array();
  for (const auto& e : manifest.sequences) {
    seqs.push_back({{"id", e.id}, {"length", e.length}, {"clean", e.clean}, {"degraded", e.degraded}, {"mask", e.mask}});
  }
  const json doc = {{"version", manifest.version}, {"seed", seed}, {"synth", to_json(synth)}, {"sequences", seqs}};
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw LoadError("cannot write " + (dir / "manifest.json").string());
  os << doc.dump(2) << "\n";
  return manifest;
}

std::vector<std::vector<Triplet>> load_triplets(const fs::path& dir, Manifest* manifest_out) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw LoadError("cannot open " + mpath.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw LoadError(mpath.string() + ": " + e.what());
  }

  Manifest manifest;
  try {
    manifest.version = doc.at("version").get<int>();
    if (manifest.version != kManifestVersion) {
      throw LoadError(mpath.string() + ": unsupported manifest version " + std::to_string(manifest.version));
    }
    manifest.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("synth")) manifest.synth = parse_config(json{{"synth", doc.at("synth")}}).synth;
    for (const auto& js : doc.at("sequences")) {
      SequenceEntry e;
      e.id = js.at("id").get<std::string>();
      e.length = js.at("length").get<int>();
      const std::string where = mpath.string() + " sequence " + e.id;
      e.clean = string_list(js, "clean", where);
      e.degraded = string_list(js, "degraded", where);
      e.mask = string_list(js, "mask", where);
      const auto n = static_cast<std::size_t>(e.length);
      if (e.length < 1 || e.clean.size() != n || e.degraded.size() != n || e.mask.size() != n) {
        throw LoadError(where + ": length does not match the listed paths");
      }
      manifest.sequences.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw LoadError(mpath.string() + ": " + e.what());
  }

  std::vector<std::vector<Triplet>> out;
  for (const auto& e : manifest.sequences) {
    std::vector<Triplet> seq;
    for (std::size_t i = 0; i < e.clean.size(); ++i) {
      for (const auto* p : {&e.clean[i], &e.degraded[i], &e.mask[i]}) {
        if (!fs::exists(dir / *p)) throw LoadError("missing file " + (dir / *p).string());
      }
      Triplet t{read_png_rgb(dir / e.clean[i]), read_png_rgb(dir / e.degraded[i]), read_png_mask(dir / e.mask[i])};
      check_outside_mask(t, (dir / e.degraded[i]).string());
      if (!seq.empty() && !seq.front().clean.same_dims(t.clean)) {
        throw ValidationError((dir / e.clean[i]).string() + ": dimensions differ within sequence " + e.id);
      }
      seq.push_back(std::move(t));
    }
    out.push_back(std::move(seq));
  }
  if (manifest_out) *manifest_out = std::move(manifest);
  return out;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

FrameSequence load_frame_dir(const fs::path& dir) {
  FrameSequence frames;
  for (const auto& p : list_pngs(dir)) frames.push_back(read_png_rgb(p));
  if (frames.empty()) throw LoadError("no PNG frames in " + dir.string());
  return frames;
}

std::vector<RealPair> load_real_pairs(const fs::path& dir) {
  std::vector<RealPair> pairs;
  for (const auto& degraded : list_pngs(dir / "degraded")) {
    const fs::path clean = dir / "clean" / degraded.filename();
    if (!fs::exists(clean)) throw LoadError("missing file " + clean.string());
    RealPair pair{read_png_rgb(degraded), read_png_rgb(clean)};
    if (!pair.degraded.same_dims(pair.clean)) {
      throw ValidationError(degraded.string() + ": dimensions differ from " + clean.string());
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw LoadError("no image pairs in " + dir.string());
  return pairs;
}

std::vector<std::vector<Triplet>> generate_dataset(const SynthConfig& cfg, std::uint64_t seed,
                                                   const FrameSequence& sources, unsigned threads) {
  cfg.validate();
  const auto len = static_cast<std::size_t>(cfg.seq_len);
  std::size_t count = static_cast<std::size_t>(cfg.num_sequences);
  if (!sources.empty()) {
    count = std::min(count, sources.size() / len);
    if (count == 0) {
      throw ConfigError("synth: " + std::to_string(sources.size()) + " input frames cannot fill one sequence of " +
                        std::to_string(len));
    }
  }

  std::vector<std::vector<Triplet>> out(count);
  auto make = [&](std::size_t i) {
    FrameSequence clean;
    if (sources.empty()) {
      clean = procedural_scene(static_cast<std::size_t>(cfg.width), static_cast<std::size_t>(cfg.height), len,
                               derive_seed(seed, 2 * i));
    } else {
      clean.assign(sources.begin() + static_cast<std::ptrdiff_t>(i * len),
                   sources.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
    }
    out[i] = synthesize_sequence(clean, derive_seed(seed, 2 * i + 1), cfg);
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) make(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          make(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace dropforge
