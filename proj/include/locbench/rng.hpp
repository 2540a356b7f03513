#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace locbench {

// Counter-style splittable PRNG built on splitmix64. Unlike the std::
// distributions, every draw is bit-reproducible across platforms and
// standard libraries, which the benchmark outputs depend on.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.28318530717958647692;
    spare_ = mag * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return mag * std::cos(kTwoPi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a string tag
/// (e.g. a query id), so per-query work is schedule-independent.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the tag bytes
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  Rng mix(base ^ h);
  return mix.next_u64();
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  Rng mix(base ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
  return mix.next_u64();
}

}  // namespace locbench
