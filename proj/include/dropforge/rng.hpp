#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace dropforge {

// Seedable generator with output that is identical on every platform: the
// engine is std::mt19937_64 (bit-exact by the standard) and all mappings to
// real and integer ranges are done here rather than through the
// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n), unbiased.
  std::size_t uniform_index(std::size_t n);
  /// Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi);
  double normal();

  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent stream seed from (base, index) with SplitMix64.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace dropforge
