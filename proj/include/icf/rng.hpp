#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace icf {

// All randomness in the project flows from one root seed through named
// substreams. A substream is keyed by (root, name, index), so independent
// components never perturb each other's draws and any stream can be
// regenerated from scratch (training resume relies on this).
//
// Distributions are hand-rolled on top of mt19937_64 because the std
// distribution implementations are not pinned by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                   std::uint64_t index = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return mix(mix(root ^ h) ^ index);
  }

  static Rng substream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    return Rng(derive_seed(root, name, index));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  // Box-Muller; the paired draw is discarded to keep the stream positionless.
  double normal() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Standard truncation at two standard deviations, resampled.
  double truncated_normal(double stddev) {
    for (;;) {
      double z = normal();
      if (std::fabs(z) <= 2.0) return z * stddev;
    }
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace icf
