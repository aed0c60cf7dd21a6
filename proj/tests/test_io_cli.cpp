#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "dropforge/cli.hpp"
#include "dropforge/config.hpp"
#include "dropforge/dataset.hpp"
#include "dropforge/errors.hpp"
#include "dropforge/png_io.hpp"

using namespace dropforge;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("dropforge_test_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir) {
  const auto path = dir / "config.json";
  std::ofstream(path) << R"({
  "synth": {"num_sequences": 2, "width": 64, "height": 64},
  "model": {"T": 5, "c": 8, "H": 32, "W": 32, "mask_hidden": 4, "disc_channels": 2},
  "train": {"lr": 0.001, "total_iters": 3, "T": 5}
})";
  return path;
}

std::vector<std::vector<Triplet>> small_dataset(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.num_sequences = 2;
  return generate_dataset(cfg, seed, {}, 1);
}

}  // namespace

TEST(Png, FrameRoundTripWithinQuantization) {
  TempDir dir("png");
  const Frame f = procedural_scene(40, 24, 1, 3)[0];
  write_png(dir.path() / "f.png", f);
  const Frame g = read_png_rgb(dir.path() / "f.png");
  ASSERT_TRUE(g.same_dims(f));
  for (std::size_t i = 0; i < f.pixels.size(); ++i) EXPECT_LE(std::abs(f.pixels[i] - g.pixels[i]), 1.0 / 255.0);
  EXPECT_EQ(quantize(0.0), 0);
  EXPECT_EQ(quantize(1.0), 255);
  EXPECT_EQ(quantize(1.7), 255);
}

TEST(Png, MaskRoundTripExactAndBinaryEnforced) {
  TempDir dir("mask");
  Mask m(9, 7);
  m.at(2, 3) = 1;
  m.at(8, 6) = 1;
  write_png(dir.path() / "m.png", m);
  EXPECT_EQ(read_png_mask(dir.path() / "m.png"), m);
  Frame gray(4, 4, 1, 0.5);
  write_png(dir.path() / "gray.png", gray);
  try {
    read_png_mask(dir.path() / "gray.png");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("gray.png"), std::string::npos);
  }
  EXPECT_THROW(read_png_rgb(dir.path() / "absent.png"), LoadError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir("dataset");
  const auto data = small_dataset(5);
  const auto manifest = save_triplets(data, dir.path(), SynthConfig{}, 5);
  ASSERT_EQ(manifest.sequences.size(), 2u);
  Manifest loaded_manifest;
  const auto loaded = load_triplets(dir.path(), &loaded_manifest);
  EXPECT_EQ(loaded_manifest.seed, 5u);
  EXPECT_EQ(loaded_manifest.version, kManifestVersion);
  ASSERT_EQ(loaded.size(), data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    ASSERT_EQ(loaded[s].size(), 5u);
    EXPECT_EQ(loaded_manifest.sequences[s].length, 5);
    for (std::size_t t = 0; t < 5; ++t) {
      EXPECT_EQ(loaded[s][t].mask, data[s][t].mask);
      for (std::size_t i = 0; i < data[s][t].clean.pixels.size(); ++i) {
        EXPECT_LE(std::abs(loaded[s][t].clean.pixels[i] - data[s][t].clean.pixels[i]), 1.0 / 255.0);
        EXPECT_LE(std::abs(loaded[s][t].degraded.pixels[i] - data[s][t].degraded.pixels[i]), 1.0 / 255.0);
      }
    }
  }
}

TEST(Dataset, MissingFileIsNamed) {
  TempDir dir("missing");
  save_triplets(small_dataset(1), dir.path(), SynthConfig{}, 1);
  fs::remove(dir.path() / "seq_001" / "degraded" / "003.png");
  try {
    load_triplets(dir.path());
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("seq_001/degraded/003.png"), std::string::npos) << e.what();
  }
}

TEST(Dataset, TamperedBackgroundIsRejected) {
  TempDir dir("tamper");
  auto data = small_dataset(2);
  save_triplets(data, dir.path(), SynthConfig{}, 2);
  Frame degraded = data[0][1].degraded;
  std::size_t x = 0, y = 0;
  while (data[0][1].mask.at(x, y)) ++x;
  degraded.at(x, y, 0) = degraded.at(x, y, 0) > 0.5 ? 0.0 : 1.0;
  write_png(dir.path() / "seq_000" / "degraded" / "001.png", degraded);
  EXPECT_THROW(load_triplets(dir.path()), ValidationError);
}

TEST(Dataset, GenerationIndependentOfThreadCount) {
  SynthConfig cfg;
  cfg.num_sequences = 3;
  EXPECT_EQ(generate_dataset(cfg, 9, {}, 1), generate_dataset(cfg, 9, {}, 3));
}

TEST(Dataset, RealPairsMatchedByName) {
  TempDir dir("real");
  fs::create_directories(dir.path() / "degraded");
  fs::create_directories(dir.path() / "clean");
  const auto frames = procedural_scene(32, 32, 2, 0);
  for (std::size_t i = 0; i < 2; ++i) {
    write_png(dir.path() / "degraded" / frame_name(i), frames[i]);
    write_png(dir.path() / "clean" / frame_name(i), frames[1 - i]);
  }
  EXPECT_EQ(load_real_pairs(dir.path()).size(), 2u);
  fs::remove(dir.path() / "clean" / frame_name(1));
  EXPECT_THROW(load_real_pairs(dir.path()), LoadError);
}

TEST(Config, DefaultsRoundTripAndUnknownKeysRejected) {
  const Config defaults;
  EXPECT_EQ(parse_config(to_json(defaults)), defaults);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"synth": {"drops": 3}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"extra": {}})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"model": {"c": 6}})")), ConfigError);
}

TEST(Cli, UsageErrorsExitTwo) {
  auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("synth"), std::string::npos);
  EXPECT_EQ(cli({"synth", "--out", "x", "--bogus"}).code, 2);
  EXPECT_EQ(cli({"synth"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, ValidationErrorsExitOne) {
  TempDir dir("cli_errors");
  EXPECT_EQ(cli({"train", (dir.path() / "nothing").string(), "--out", (dir.path() / "o").string()}).code, 1);
  std::ofstream(dir.path() / "bad.json") << R"({"synth": {"unknown": 1}})";
  EXPECT_EQ(cli({"synth", "--config", (dir.path() / "bad.json").string(), "--out", (dir.path() / "d").string()}).code,
            1);
  setenv("DROPFORGE_THREADS", "zero", 1);
  EXPECT_EQ(cli({"synth", "--out", (dir.path() / "d").string()}).code, 1);
  unsetenv("DROPFORGE_THREADS");
}

TEST(Cli, SynthIsReproducible) {
  TempDir dir("cli_synth");
  const auto config = write_config(dir.path()).string();
  const auto a = dir.path() / "a", b = dir.path() / "b";
  ASSERT_EQ(cli({"synth", "--config", config, "--seed", "42", "--out", a.string()}).code, 0);
  setenv("DROPFORGE_THREADS", "1", 1);
  ASSERT_EQ(cli({"synth", "--config", config, "--seed", "42", "--out", b.string()}).code, 0);
  unsetenv("DROPFORGE_THREADS");
  const auto ta = tree(a), tb = tree(b);
  EXPECT_EQ(ta.size(), 1u + 2u * 15u);
  EXPECT_EQ(ta, tb);
  const auto c = dir.path() / "c";
  ASSERT_EQ(cli({"synth", "--config", config, "--seed", "43", "--out", c.string()}).code, 0);
  EXPECT_NE(tree(c), ta);
}

TEST(Cli, EvalSelfComparison) {
  TempDir dir("cli_eval");
  const auto frames = procedural_scene(64, 64, 3, 1);
  fs::create_directories(dir.path() / "a");
  for (std::size_t i = 0; i < 3; ++i) write_png(dir.path() / "a" / frame_name(i), frames[i]);
  const auto r = cli({"eval", (dir.path() / "a").string(), (dir.path() / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("psnr").get<double>(), 99.0);
  EXPECT_NEAR(j.at("ms_ssim").get<double>(), 1.0, 1e-12);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
}

TEST(Cli, TrainInferPipeline) {
  TempDir dir("cli_pipeline");
  const auto config = write_config(dir.path()).string();
  const auto data = dir.path() / "data", run = dir.path() / "run", out = dir.path() / "out";
  ASSERT_EQ(cli({"synth", "--config", config, "--seed", "1", "--out", data.string()}).code, 0);
  auto r = cli({"train", "--config", config, "--seed", "1", data.string(), "--out", run.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(run / "checkpoint.bin"));
  const auto log = slurp(run / "losses.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  r = cli({"infer", (run / "checkpoint.bin").string(), (data / "seq_000" / "degraded").string(), "--out",
           out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (std::size_t i = 0; i < 5; ++i) {
    const Frame cleaned = read_png_rgb(out / "cleaned" / frame_name(i));
    EXPECT_EQ(cleaned.width, 32u);
    EXPECT_EQ(read_png_mask(out / "mask" / frame_name(i)).width, 32u);
  }
}
