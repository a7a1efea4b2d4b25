#pragma once

// Seeded random number generation with a fully pinned algorithm so that
// dataset generation and parameter init are bit-reproducible across
// platforms. mt19937_64 output is specified by the standard; the float
// conversions below avoid std::uniform_real_distribution, whose mapping is
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

namespace asfm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive; modulo bias is negligible
  // for the desk-scale ranges used here (n << 2^64).
  std::uint64_t uniform_index(std::uint64_t n) { return gen_() % n; }

  // Standard normal via Box-Muller (pinned, unlike std::normal_distribution).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Independent child stream, e.g. one per dataset instance or per training
  // step, so parallel generation stays deterministic.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x51ed270b61ULL));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace asfm
