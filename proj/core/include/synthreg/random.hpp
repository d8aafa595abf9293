#pragma once

#include <cstdint>

namespace synthreg {

/// SplitMix64 finalizer; a bijective 64-bit mixing function.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results do not depend on draw order,
/// platform, or standard-library distribution implementations.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t bits(std::uint64_t counter) const noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t counter) const noexcept;
  double uniform(std::uint64_t counter, double lo, double hi) const noexcept;
  /// Standard normal via Box-Muller on counters (2c, 2c+1).
  double normal(std::uint64_t counter) const noexcept;

  CounterRng substream(std::uint64_t stream) const noexcept;
  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
};

/// Sequential view over a CounterRng for code that just wants the next draw.
class RngCursor {
 public:
  explicit RngCursor(CounterRng rng) noexcept : rng_(rng) {}

  double uniform() noexcept { return rng_.uniform(next_++); }
  double uniform(double lo, double hi) noexcept { return rng_.uniform(next_++, lo, hi); }
  double normal() noexcept { return rng_.normal(next_++); }
  std::uint64_t bits() noexcept { return rng_.bits(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
};

}  // namespace synthreg
