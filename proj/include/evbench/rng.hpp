#pragma once

#include <cmath>
#include <cstdint>

namespace evbench {

// All randomness in this project flows through one counter-based generator
// so that results are bit-identical across platforms and runs. Draw i of a
// stream with seed s is mix64(s + i * kGoldenGamma) -- the SplitMix64
// sequence. Constants are fixed here and documented in the README.

inline constexpr uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer; bijective on 64-bit integers.
inline constexpr uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

/// Seed for a derived sub-stream (per-sample, per-fold, per-sweep-cell).
/// Injective in `index` for a fixed parent seed, so derived seeds never
/// collide.
inline constexpr uint64_t derive_seed(uint64_t seed, uint64_t index) {
  return mix64(seed + kGoldenGamma * (index + 1));
}

class CounterRng {
 public:
  explicit CounterRng(uint64_t seed) : seed_(seed) {}

  uint64_t next_u64() { return mix64(seed_ + kGoldenGamma * ++counter_); }

  /// Uniform in [0, 1), 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi], both inclusive. Rejection sampling keeps
  /// the distribution unbiased for every span.
  int64_t next_int(int64_t lo, int64_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    if (span == 0) return static_cast<int64_t>(next_u64());  // full 64-bit range
    const uint64_t limit = (UINT64_MAX / span) * span;
    uint64_t u = next_u64();
    while (u >= limit) u = next_u64();
    return lo + static_cast<int64_t>(u % span);
  }

  /// Box-Muller; consumes exactly two draws per call.
  double next_gaussian(double mean, double stddev) {
    const double u1 = 1.0 - next_unit();  // (0, 1], keeps the log finite
    const double u2 = next_unit();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  uint64_t draws() const { return counter_; }

 private:
  static constexpr double kTwoPi = 6.283185307179586476925286766559;
  uint64_t seed_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace evbench
