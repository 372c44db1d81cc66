#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace mixlr {

// splitmix64 finalizer; decorrelates consecutive or related seed values.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Child seed for unit of work `index` (replication, restart, stream).
// Pure function of (parent, index), so any single replication or restart can
// be re-run in isolation:  child = splitmix64(parent xor golden * (index+1)).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

// Seeded generator with explicit sampling routines. All distributions are
// implemented here rather than via std::*_distribution so that draw sequences
// are fixed by this code alone, not by the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // uniform on [0,1), 53-bit resolution
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // standard normal, Marsaglia polar method with cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // index draw from a probability vector (inverse CDF, one uniform consumed)
  template <class Vec>
  int categorical(const Vec& probs) {
    const double u = uniform01();
    double cum = 0.0;
    const int m = static_cast<int>(probs.size());
    for (int j = 0; j < m; ++j) {
      cum += probs[j];
      if (u < cum) return j;
    }
    return m - 1;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mixlr
