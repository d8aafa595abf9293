#include "synthreg/random.hpp"

#include <cmath>
#include <numbers>

namespace synthreg {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kStreamSalt = 0xD1B54A32D192ED03ULL;
}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
    : key_(mix64(mix64(seed) ^ (stream * kStreamSalt + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const noexcept {
  return mix64(key_ ^ mix64(counter * kGolden + 1));
}

double CounterRng::uniform(std::uint64_t counter) const noexcept {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(std::uint64_t counter, double lo, double hi) const noexcept {
  return lo + (hi - lo) * uniform(counter);
}

double CounterRng::normal(std::uint64_t counter) const noexcept {
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

CounterRng CounterRng::substream(std::uint64_t stream) const noexcept {
  CounterRng child(key_, stream);
  return child;
}

}  // namespace synthreg
