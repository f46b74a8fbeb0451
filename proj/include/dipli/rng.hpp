#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dipli {

// Deterministic RNG used by every stochastic component. The engine is
// std::mt19937_64 (fully specified by the standard), normals come from an
// explicit Box-Muller transform rather than std::normal_distribution, so a
// given (seed, call sequence) pins the draws independent of the C++ runtime.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // One normal draw per call; the Box-Muller partner value is discarded so
  // the stream position never depends on call history.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<long> dist(mean);
    return dist(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

namespace detail {
inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}
}  // namespace detail

// Domain-separated sub-seed: one master seed drives independent streams keyed
// by name, so adding a new stream never perturbs existing ones.
inline uint64_t derive_seed(uint64_t master, std::string_view stream) {
  return detail::splitmix64(master ^ detail::fnv1a(stream));
}

inline Rng derive_rng(uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

}  // namespace dipli
