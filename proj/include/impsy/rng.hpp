#pragma once

#include <cstdint>
#include <random>

namespace impsy {

/// Seeded generator whose derived distributions are computed here rather than
/// through <random> distributions, so sequences are identical on every
/// standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x1DEA5u) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Random seed from the OS entropy source.
std::uint64_t entropy_seed();

}  // namespace impsy
