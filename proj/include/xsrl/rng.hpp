#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace xsrl {

/// Deterministic RNG stream. All floating-point draws are derived from the
/// raw 64-bit engine output with fixed arithmetic, so a given seed produces
/// the same sequence on every platform with IEEE doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Uses two uniforms per draw; no caching,
  /// so copies of an Rng stay in lockstep.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n). Modulo bias is irrelevant here; determinism
  /// is what matters.
  std::uint64_t integer(std::uint64_t n) { return bits() % n; }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Derives an independent sub-stream seed from a master seed and a stable
/// component label, e.g. derive_seed(seed, "env:3"). FNV-1a over the label,
/// mixed with the master seed through splitmix64.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return detail::splitmix64(master ^ detail::splitmix64(h));
}

}  // namespace xsrl
