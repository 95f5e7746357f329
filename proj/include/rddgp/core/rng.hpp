#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace rddgp {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

/// Counter-based, splittable generator.
///
/// Output k of the stream with key K is `mix64(K + (k + 1) * 0x9E3779B97F4A7C15)`,
/// i.e. SplitMix64 evaluated at an explicit counter, so any draw can be
/// recomputed without replaying the stream. Uniforms take the top 53 bits.
/// Normals use Box-Muller on the counter pair (2p, 2p + 1): even counters
/// return the cosine branch, odd counters the sine branch.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr explicit CounterRng(std::uint64_t key) : key_(key) {}

  constexpr std::uint64_t key() const { return key_; }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + (counter + 1) * kGolden);
  }

  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal.
  double normal(std::uint64_t counter) const {
    const std::uint64_t pair = counter >> 1;
    const double u1 = 1.0 - uniform(2 * pair);  // (0, 1]
    const double u2 = uniform(2 * pair + 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (counter & 1U) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

  /// Independent child stream.
  constexpr CounterRng split(std::uint64_t stream) const {
    return CounterRng(mix64(key_ ^ mix64(stream + kGolden)));
  }

 private:
  std::uint64_t key_;
};

/// Sequential cursor over a CounterRng.
class RngStream {
 public:
  explicit RngStream(CounterRng rng) : rng_(rng) {}
  explicit RngStream(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t next_bits() { return rng_.bits(counter_++); }
  double next_uniform() { return rng_.uniform(counter_++); }
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }
  double next_normal() { return rng_.normal(counter_++); }
  /// Uniform integer in [lo, hi].
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_bits() % span);
  }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace rddgp
