#pragma once

#include <array>
#include <cstdint>

namespace bn {

/// splitmix64 step: advances `state` and returns the next output word.
inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derives the seed of substream `index` of a splitmix64 stream seeded with
/// `seed`. Used everywhere a child stream is needed (per-example generation,
/// per-repetition seeds, dataset seeds) so that streams are reproducible and
/// independent of evaluation order.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t state = seed + index * 0x9E3779B97F4A7C15ull;
  return splitmix64_next(state);
}

/// xoshiro256** seeded through splitmix64, as recommended by its authors.
/// All randomness in the project flows through this generator; dataset files
/// are bit-reproducible because of it.
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(uint64_t seed) {
    uint64_t st = seed;
    for (auto& w : s_) w = splitmix64_next(st);
  }

  uint64_t next_u64() {
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  bool next_bool() { return (next_u64() >> 63) != 0; }

  /// Unbiased integer in [0, bound) via rejection sampling. bound > 0.
  uint64_t next_below(uint64_t bound) {
    uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<uint64_t, 4> s_;
};

}  // namespace bn
