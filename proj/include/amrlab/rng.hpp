#pragma once

#include <cmath>
#include <cstdint>

namespace amr {

/// Counter-based random stream. A stream is identified by a 64-bit key;
/// `split` derives an independent child stream from a label, so problem
/// sampling, network init and action sampling never share state. Draws are
/// a pure function of (key, counter), which makes replay and parallel
/// evaluation reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(scramble(key ^ 0x9e3779b97f4a7c15ull)) {}

  Rng split(std::uint64_t label) const {
    return Rng(scramble(key_ + 0xbf58476d1ce4e5b9ull * (label + 1)));
  }

  std::uint64_t next_u64() {
    std::uint64_t x = key_ + 0x9e3779b97f4a7c15ull * (++counter_);
    return scramble(x);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller. Consumes two uniforms per call so the
  /// draw count per sample is fixed.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  bool bernoulli(double p) { return next_double() < p; }

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  std::uint64_t key() const { return key_; }

 private:
  // splitmix64 finalizer, applied twice to decorrelate nearby keys/counters.
  static std::uint64_t scramble(std::uint64_t x) {
    for (int round = 0; round < 2; ++round) {
      x ^= x >> 30;
      x *= 0xbf58476d1ce4e5b9ull;
      x ^= x >> 27;
      x *= 0x94d049bb133111ebull;
      x ^= x >> 31;
    }
    return x;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace amr
