#pragma once

// Seeded substreams. std::mt19937_64 is fully specified by the standard; the
// variate transforms are hand-rolled so draws are reproducible across library
// implementations on the same platform.

#include <cmath>
#include <cstdint>
#include <random>

namespace equipow::rngu {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, a, b), e.g. (run seed,
// user identity, purpose tag).
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t a,
                         std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL + 1));
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed = 0) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double u01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Box-Muller without spare caching: two uniforms per draw.
  double gaussian(double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - u01();  // (0, 1]
    const double u2 = u01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Exponential(1), the |h|^2 law of Rayleigh fading.
  double expo() { return -std::log1p(-u01()); }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection-free modulo is fine here; n is tiny relative to 2^64.
    return eng_() % n;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace equipow::rngu
