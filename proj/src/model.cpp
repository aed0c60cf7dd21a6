#include "dropforge/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "dropforge/config.hpp"
#include "dropforge/errors.hpp"
#include "dropforge/rng.hpp"

namespace dropforge {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'C', 'K', 'P', 'T', '\0', '\0'};

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const std::string& s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void tensor(const std::string& name, const Shape& shape, std::span<const double> data) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) u64(e);
    for (double v : data) f64(v);
  }

 private:
  void put(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os_.write(buf, n);
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    if (n > (1u << 26)) fail("implausible length");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated file");
    return s;
  }
  [[noreturn]] void fail(const std::string& why) const { throw LoadError(path_ + ": " + why); }

 private:
  std::uint64_t get(int n) {
    unsigned char buf[8];
    is_.read(reinterpret_cast<char*>(buf), n);
    if (!is_) fail("truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
  std::string path_;
};

struct StoredTensor {
  Shape shape;
  std::vector<double> data;
};

void write_optimizer(Writer& w, const std::string& prefix, const OptimizerState& opt) {
  for (const auto& [name, slot] : opt.slots) {
    w.tensor(prefix + name + ".m", {slot.m.size()}, slot.m);
    w.tensor(prefix + name + ".v", {slot.v.size()}, slot.v);
    const double step = static_cast<double>(slot.step);
    w.tensor(prefix + name + ".step", {1}, std::span<const double>(&step, 1));
  }
}

std::size_t optimizer_tensor_count(const OptimizerState& opt) { return 3 * opt.slots.size(); }

void restore_params(ParameterList& params, std::map<std::string, StoredTensor>& stored, const std::string& path) {
  for (auto& item : params.items()) {
    auto it = stored.find(item.name);
    if (it == stored.end()) throw LoadError(path + ": missing parameter " + item.name);
    if (it->second.shape != item.value.shape()) {
      throw LoadError(path + ": parameter " + item.name + " has shape " + shape_str(it->second.shape) +
                      ", model config expects " + shape_str(item.value.shape()));
    }
    auto dst = item.value.mutable_data();
    std::copy(it->second.data.begin(), it->second.data.end(), dst.begin());
    stored.erase(it);
  }
}

void restore_optimizer(OptimizerState& opt, const std::string& prefix, const ParameterList& params,
                       std::map<std::string, StoredTensor>& stored, const std::string& path) {
  for (const auto& item : params.items()) {
    auto m = stored.find(prefix + item.name + ".m");
    if (m == stored.end()) continue;
    auto v = stored.find(prefix + item.name + ".v");
    auto step = stored.find(prefix + item.name + ".step");
    if (v == stored.end() || step == stored.end()) throw LoadError(path + ": incomplete optimizer state for " + item.name);
    if (m->second.data.size() != item.value.numel() || v->second.data.size() != item.value.numel() ||
        step->second.data.size() != 1) {
      throw LoadError(path + ": optimizer state for " + item.name + " has the wrong size");
    }
    MomentSlot slot;
    slot.m = std::move(m->second.data);
    slot.v = std::move(v->second.data);
    slot.step = static_cast<std::int64_t>(step->second.data[0]);
    opt.slots[item.name] = std::move(slot);
    stored.erase(m);
    stored.erase(v);
    stored.erase(step);
  }
}

}  // namespace

ModelState::ModelState(const ModelConfig& cfg)
    : config(cfg), generator(cfg), discriminator(cfg, derive_seed(cfg.init_seed, 1)) {}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write checkpoint " + path.string());
  Writer w(os);
  os.write(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = to_json(state.config).dump();
  w.u64(cfg.size());
  w.bytes(cfg);
  const auto& gp = state.generator.parameters().items();
  const auto& dp = state.discriminator.parameters().items();
  w.u64(gp.size() + dp.size() + optimizer_tensor_count(state.generator_opt) +
        optimizer_tensor_count(state.discriminator_opt));
  for (const auto& item : gp) w.tensor(item.name, item.value.shape(), item.value.data());
  for (const auto& item : dp) w.tensor(item.name, item.value.shape(), item.value.data());
  write_optimizer(w, "adam.generator.", state.generator_opt);
  write_optimizer(w, "adam.discriminator.", state.discriminator_opt);
  if (!os) throw LoadError("failed writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + p);
  Reader r(is, p);
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) r.fail("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  ModelConfig cfg;
  try {
    cfg = parse_model_config(nlohmann::json::parse(r.bytes(r.u64())));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("malformed model config: ") + e.what());
  }

  std::map<std::string, StoredTensor> stored;
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    StoredTensor t;
    const auto rank = r.u32();
    if (rank > 8) r.fail("tensor " + name + " has implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u64());
    const std::size_t n = shape_numel(t.shape);
    if (n > (1u << 28)) r.fail("tensor " + name + " is implausibly large");
    t.data.resize(n);
    for (auto& v : t.data) v = r.f64();
    stored.emplace(std::move(name), std::move(t));
  }

  ModelState state(cfg);
  restore_params(state.generator.parameters(), stored, p);
  restore_params(state.discriminator.parameters(), stored, p);
  restore_optimizer(state.generator_opt, "adam.generator.", state.generator.parameters(), stored, p);
  restore_optimizer(state.discriminator_opt, "adam.discriminator.", state.discriminator.parameters(), stored, p);
  if (!stored.empty()) r.fail("unexpected tensor " + stored.begin()->first);
  return state;
}

}  // namespace dropforge
