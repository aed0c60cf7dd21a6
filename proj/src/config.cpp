#include "dropforge/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "dropforge/errors.hpp"

namespace dropforge {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and rejects whatever is left over.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
    }
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_section(const json& doc, const char* key, Fn&& fn) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  Section s(*it, key);
  fn(s);
  s.finish();
}

void read_synth(Section& s, SynthConfig& c) {
  s.read("min_drops", c.min_drops);
  s.read("max_drops", c.max_drops);
  s.read("radius_min", c.radius_min);
  s.read("radius_max", c.radius_max);
  s.read("blur_init_min", c.blur_init_min);
  s.read("blur_init_max", c.blur_init_max);
  s.read("blur_step", c.blur_step);
  s.read("blur_max", c.blur_max);
  s.read("refraction_min", c.refraction_min);
  s.read("refraction_max", c.refraction_max);
  s.read("shift_px", c.shift_px);
  s.read("seq_len", c.seq_len);
  s.read("num_sequences", c.num_sequences);
  s.read("width", c.width);
  s.read("height", c.height);
}

void read_model(Section& s, ModelConfig& c) {
  s.read("T", c.T);
  s.read("c", c.c);
  s.read("H", c.H);
  s.read("W", c.W);
  s.read("sab_heads", c.sab_heads);
  s.read("tab_patch_small", c.tab_patch_small);
  s.read("tab_patch_large", c.tab_patch_large);
  s.read("mask_hidden", c.mask_hidden);
  s.read("disc_channels", c.disc_channels);
  s.read("init_seed", c.init_seed);
}

}  // namespace

void Config::validate() const {
  synth.validate();
  model.validate();
  train.validate();
  loss.weights.validate();
  eval.validate();
  if (train.T != model.T) throw ConfigError("train.T must equal model.T");
  if (loss.weights.feature_levels.size() != 5) throw ConfigError("loss.feature_level_weights needs 5 entries");
}

Config parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
  Config cfg;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    static const std::set<std::string> sections{"synth", "model", "train", "loss", "eval"};
    if (!sections.count(it.key())) throw ConfigError("unknown config section '" + it.key() + "'");
  }
  with_section(doc, "synth", [&](Section& s) { read_synth(s, cfg.synth); });
  with_section(doc, "model", [&](Section& s) { read_model(s, cfg.model); });
  with_section(doc, "train", [&](Section& s) {
    auto& t = cfg.train;
    s.read("lr", t.lr);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("adam_eps", t.adam_eps);
    s.read("total_iters", t.total_iters);
    s.read("block", t.block);
    s.read("synth_per_block", t.synth_per_block);
    s.read("T", t.T);
    s.read("seed", t.seed);
  });
  with_section(doc, "loss", [&](Section& s) {
    auto& l = cfg.loss;
    s.read("lambda_mask", l.weights.mask);
    s.read("lambda_recons", l.weights.recons);
    s.read("lambda_temporal", l.weights.temporal);
    s.read("feature_level_weights", l.weights.feature_levels);
    s.read("extractor_seed", l.extractor_seed);
  });
  with_section(doc, "eval", [&](Section& s) {
    auto& e = cfg.eval;
    s.read("psnr_cap", e.psnr_cap);
    s.read("k1", e.k1);
    s.read("k2", e.k2);
    s.read("window", e.window);
    s.read("sigma", e.sigma);
    s.read("scale_weights", e.scale_weights);
    s.read("warp_offsets", e.warp_offsets);
  });
  cfg.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const SynthConfig& c) {
  return {{"min_drops", c.min_drops},         {"max_drops", c.max_drops},
          {"radius_min", c.radius_min},       {"radius_max", c.radius_max},
          {"blur_init_min", c.blur_init_min}, {"blur_init_max", c.blur_init_max},
          {"blur_step", c.blur_step},         {"blur_max", c.blur_max},
          {"refraction_min", c.refraction_min}, {"refraction_max", c.refraction_max},
          {"shift_px", c.shift_px},           {"seq_len", c.seq_len},
          {"num_sequences", c.num_sequences}, {"width", c.width},
          {"height", c.height}};
}

json to_json(const ModelConfig& c) {
  return {{"T", c.T},
          {"c", c.c},
          {"H", c.H},
          {"W", c.W},
          {"sab_heads", c.sab_heads},
          {"tab_patch_small", c.tab_patch_small},
          {"tab_patch_large", c.tab_patch_large},
          {"mask_hidden", c.mask_hidden},
          {"disc_channels", c.disc_channels},
          {"init_seed", c.init_seed}};
}

ModelConfig parse_model_config(const json& doc) {
  ModelConfig cfg;
  Section s(doc, "model");
  read_model(s, cfg);
  s.finish();
  cfg.validate();
  return cfg;
}

json to_json(const Config& c) {
  const auto& t = c.train;
  const auto& e = c.eval;
  return {{"synth", to_json(c.synth)},
          {"model", to_json(c.model)},
          {"train",
           {{"lr", t.lr},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_eps", t.adam_eps},
            {"total_iters", t.total_iters},
            {"block", t.block},
            {"synth_per_block", t.synth_per_block},
            {"T", t.T},
            {"seed", t.seed}}},
          {"loss",
           {{"lambda_mask", c.loss.weights.mask},
            {"lambda_recons", c.loss.weights.recons},
            {"lambda_temporal", c.loss.weights.temporal},
            {"feature_level_weights", c.loss.weights.feature_levels},
            {"extractor_seed", c.loss.extractor_seed}}},
          {"eval",
           {{"psnr_cap", e.psnr_cap},
            {"k1", e.k1},
            {"k2", e.k2},
            {"window", e.window},
            {"sigma", e.sigma},
            {"scale_weights", e.scale_weights},
            {"warp_offsets", e.warp_offsets}}}};
}

}  // namespace dropforge
