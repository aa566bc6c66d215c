#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fss {

/// Deterministic RNG with all distributions implemented in-repo, so streams
/// are identical across standard libraries.  fork(salt) derives an
/// independent stream that depends only on (seed, salt), not on draw order.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(splitmix(seed ^ 0x2545F4914F6CDD1Dull)) {
    if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
  }

  uint64_t next() {
    // xorshift64*
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v = next();
    while (v >= limit) v = next();
    return lo + static_cast<int>(v % span);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Knuth's method; fine for the small means used here.
  int poisson(double mean) {
    if (mean < 0) throw std::invalid_argument("poisson: negative mean");
    if (mean == 0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (size_t i = xs.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(xs[i - 1], xs[j]);
    }
  }

  /// Independent child stream determined purely by (seed, salt).
  Rng fork(uint64_t salt) const { return Rng(splitmix(seed_ ^ splitmix(salt))); }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  uint64_t seed_;
  uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace fss
