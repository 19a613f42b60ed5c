#pragma once

#include <cstdint>

namespace sqvi {

/**
 * Counter-based pseudo-random stream built on the SplitMix64 finalizer.
 *
 * The stream is a pure function of (seed, counter):
 *
 *   raw(seed, c)  = finalize(seed + 0x9E3779B97F4A7C15 * (c + 1))
 *   finalize(z):    z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
 *                   z ^= z >> 27; z *= 0x94D049BB133111EB;
 *                   z ^= z >> 31; return z;
 *
 * which equals the (c+1)-th output of the classic SplitMix64 generator
 * seeded with `seed`. Any entry can be produced without generating its
 * predecessors, so independent consumers may split the counter space.
 *
 * Real-valued draws use the top 53 bits:
 *   unit(seed, c)      = (raw >> 11) * 2^-53           in [0, 1)
 *   symmetric(seed, c) = 2 * unit - 1                  in [-1, 1)
 *
 * This mapping is part of the tool's file-level reproducibility contract:
 * a (seed, counter-layout) pair identifies the same draw everywhere.
 */
inline std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t splitmix64_at(std::uint64_t seed, std::uint64_t counter) {
  return splitmix64_finalize(seed + 0x9E3779B97F4A7C15ull * (counter + 1));
}

inline double unit_draw_at(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(splitmix64_at(seed, counter) >> 11) * 0x1.0p-53;
}

inline double symmetric_draw_at(std::uint64_t seed, std::uint64_t counter) {
  return 2.0 * unit_draw_at(seed, counter) - 1.0;
}

/// Sequential view over the counter space; `skip` jumps are O(1).
class SplitMixStream {
 public:
  explicit SplitMixStream(std::uint64_t seed, std::uint64_t start_counter = 0)
      : seed_(seed), counter_(start_counter) {}

  std::uint64_t next_u64() { return splitmix64_at(seed_, counter_++); }
  double next_unit() { return unit_draw_at(seed_, counter_++); }
  double next_symmetric() { return symmetric_draw_at(seed_, counter_++); }

  void skip(std::uint64_t n) { counter_ += n; }
  std::uint64_t counter() const { return counter_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace sqvi
