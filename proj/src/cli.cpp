#include "dropforge/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "dropforge/config.hpp"
#include "dropforge/dataset.hpp"
#include "dropforge/errors.hpp"
#include "dropforge/gradcheck_suite.hpp"
#include "dropforge/png_io.hpp"

namespace dropforge {

namespace fs = std::filesystem;

namespace {

constexpr double kGradThreshold = 1e-4;

Config config_from(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

unsigned synth_threads() {
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("DROPFORGE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("DROPFORGE_THREADS must be a positive integer");
    threads = std::min(threads, static_cast<unsigned>(v));
  }
  return threads;
}

int cmd_synth(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
              const std::string& input_dir, std::ostream& out) {
  const Config cfg = config_from(config_path);
  FrameSequence sources;
  if (!input_dir.empty()) sources = load_frame_dir(input_dir);
  const auto sequences = generate_dataset(cfg.synth, seed, sources, synth_threads());
  const auto manifest = save_triplets(sequences, out_dir, cfg.synth, seed);
  out << "wrote " << manifest.sequences.size() << " sequences of " << cfg.synth.seq_len << " frames to " << out_dir
      << "\n";
  return 0;
}

// Splits each sequence into consecutive non-overlapping windows of T frames.
std::vector<std::vector<Triplet>> windows_of(const std::vector<std::vector<Triplet>>& sequences, int T) {
  std::vector<std::vector<Triplet>> out;
  const auto t = static_cast<std::size_t>(T);
  for (const auto& seq : sequences) {
    for (std::size_t start = 0; start + t <= seq.size(); start += t) {
      out.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(start),
                       seq.begin() + static_cast<std::ptrdiff_t>(start + t));
    }
  }
  if (out.empty() && !sequences.empty()) {
    throw ConfigError("train: sequences are shorter than model.T = " + std::to_string(T));
  }
  return out;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
              const std::string& data_dir, const std::string& real_dir, std::ostream& out) {
  Config cfg = config_from(config_path);
  if (seed) {
    cfg.train.seed = *seed;
    cfg.model.init_seed = *seed;
  }
  cfg.validate();
  const auto synthetic = windows_of(load_triplets(data_dir), cfg.model.T);
  std::vector<RealPair> real;
  if (!real_dir.empty()) real = load_real_pairs(real_dir);
  Trainer trainer(cfg.model, cfg.train, cfg.loss.weights, cfg.loss.extractor_seed);
  const auto result = train_loop(trainer, synthetic, real, cfg.train, out_dir);
  out << "trained " << result.reports.size() << " iterations; checkpoint " << result.checkpoint.string() << ", log "
      << result.loss_log.string() << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& input_dir, const std::string& out_dir,
              std::ostream& out) {
  const ModelState state = load_checkpoint(checkpoint);
  const auto& cfg = state.config;
  const FrameSequence frames = load_frame_dir(input_dir);
  for (const auto& f : frames) {
    if (f.width < static_cast<std::size_t>(cfg.W) || f.height < static_cast<std::size_t>(cfg.H)) {
      throw DimensionError("infer: frames must be at least " + std::to_string(cfg.W) + "x" + std::to_string(cfg.H));
    }
  }
  fs::create_directories(fs::path(out_dir) / "cleaned");
  fs::create_directories(fs::path(out_dir) / "mask");

  NoGradGuard no_grad;
  const auto T = static_cast<std::size_t>(cfg.T);
  for (std::size_t start = 0; start < frames.size(); start += T) {
    // The last window is padded by repeating its final frame.
    std::vector<Frame> window;
    for (std::size_t i = 0; i < T; ++i) window.push_back(frames[std::min(start + i, frames.size() - 1)]);
    const auto result = state.generator.forward(frames_to_tensors(window, cfg));
    for (std::size_t i = 0; i < T && start + i < frames.size(); ++i) {
      const std::string name = frame_name(start + i);
      write_png(fs::path(out_dir) / "cleaned" / name, tensor_to_frame(result.cleaned[i]));
      const Frame prob = tensor_to_frame(result.masks[i]);
      Mask mask(prob.width, prob.height);
      for (std::size_t p = 0; p < mask.bits.size(); ++p) mask.bits[p] = prob.pixels[p] >= 0.5 ? 1 : 0;
      write_png(fs::path(out_dir) / "mask" / name, mask);
    }
  }
  out << "cleaned " << frames.size() << " frames into " << out_dir << "\n";
  return 0;
}

nlohmann::json report_json(const MetricReport& r) {
  return {{"psnr", r.psnr},
          {"ms_ssim", r.ms_ssim},
          {"warp_error", r.warp_error},
          {"psnr_per_frame", r.psnr_per_frame},
          {"ms_ssim_per_frame", r.ms_ssim_per_frame},
          {"ms_ssim_scales", r.ms_ssim_scales}};
}

int cmd_eval(const std::string& config_path, const std::string& output_dir, const std::string& reference_dir,
             const std::string& out_path, std::ostream& out, std::ostream& err) {
  const Config cfg = config_from(config_path);
  const auto output = load_frame_dir(output_dir);
  const auto reference = load_frame_dir(reference_dir);
  const MetricReport report = evaluate(output, reference, cfg.eval);
  if (report.ms_ssim_scales < static_cast<int>(cfg.eval.scale_weights.size())) {
    err << "warning: ms_ssim used " << report.ms_ssim_scales << " of " << cfg.eval.scale_weights.size()
        << " scales for these frame sizes\n";
  }
  const std::string text = report_json(report).dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw LoadError("cannot write " + out_path);
    os << text;
  }
  return 0;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, std::ostream& out) {
  GradCheckSuiteOptions options;
  options.network = gradcheck_network_config();
  options.seed = seed;
  if (!config_path.empty()) {
    const Config cfg = load_config(config_path);
    options.network = cfg.model;
    options.weights = cfg.loss.weights;
  }
  const auto rows = run_gradcheck_suite(options);
  print_gradcheck_table(out, rows, kGradThreshold);
  for (const auto& r : rows) {
    if (!(r.max_rel_error < kGradThreshold)) return 1;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Raindrop synthesis, removal training and evaluation", "dropforge"};
  app.require_subcommand(1);

  std::string config_path, out_path, input_dir, data_dir, real_dir, checkpoint, dir_a, dir_b;
  std::uint64_t seed = 0;

  auto* synth = app.add_subcommand("synth", "Synthesize a triplet dataset");
  synth->add_option("--config", config_path, "JSON configuration")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", out_path, "Output dataset directory")->required();
  synth->add_option("--input", input_dir, "Directory of clean PNG frames (procedural scenes when omitted)");

  auto* train = app.add_subcommand("train", "Train on a triplet dataset");
  train->add_option("--config", config_path, "JSON configuration")->check(CLI::ExistingFile);
  auto* train_seed = train->add_option("--seed", seed, "Overrides train.seed and model.init_seed");
  train->add_option("--out", out_path, "Output directory for checkpoint.bin and losses.csv")->required();
  train->add_option("data", data_dir, "Triplet dataset directory")->required();
  train->add_option("--real", real_dir, "Real-image directory with degraded/ and clean/");

  auto* infer = app.add_subcommand("infer", "Remove raindrops from a frame sequence");
  infer->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("frames", input_dir, "Directory of degraded PNG frames")->required();
  infer->add_option("--out", out_path, "Output directory (cleaned/ and mask/)")->required();

  auto* eval = app.add_subcommand("eval", "Compare two frame directories");
  eval->add_option("--config", config_path, "JSON configuration")->check(CLI::ExistingFile);
  eval->add_option("output", dir_a, "Directory of restored frames")->required();
  eval->add_option("reference", dir_b, "Directory of reference frames")->required();
  eval->add_option("--out", out_path, "Write the metrics JSON here instead of stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--config", config_path, "JSON configuration (model and loss sections)")
      ->check(CLI::ExistingFile);
  gradcheck->add_option("--seed", seed, "Random seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(config_path, seed, out_path, input_dir, out);
    if (*train) {
      return cmd_train(config_path, *train_seed ? std::optional<std::uint64_t>(seed) : std::nullopt, out_path,
                       data_dir, real_dir, out);
    }
    if (*infer) return cmd_infer(checkpoint, input_dir, out_path, out);
    if (*eval) return cmd_eval(config_path, dir_a, dir_b, out_path, out, err);
    if (*gradcheck) return cmd_gradcheck(config_path, seed, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dropforge
