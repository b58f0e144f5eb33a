#pragma once

#include <cstdint>

namespace aipw {

/// splitmix64 mixing step; used to derive independent substreams from a base
/// seed and one or more counters, so that per-run / per-chunk streams are
/// reproducible no matter which thread evaluates them.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  return mix64(mix64(base) ^ mix64(counter + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t c1, std::uint64_t c2) {
  return derive_seed(derive_seed(base, c1), c2);
}

/// xoshiro256++ engine. Small, fast, and fully under our control so streams
/// are bit-stable across platforms and standard-library versions.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) {
    std::uint64_t z = seed;
    for (auto& si : s_) {
      z = mix64(z);
      si = z;
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~0ULL; }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via inverse CDF; consumes exactly one draw, which keeps
  /// the per-observation stream layout fixed.
  double normal();

  /// Fisher-Yates index: uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    // rejection-free is unnecessary here; 64-bit modulo bias is negligible,
    // but use Lemire's method anyway since it is one multiply.
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace aipw
