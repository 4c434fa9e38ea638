#pragma once

// Seeded random streams.
//
// Every simulation in the toolkit owns a private generator seeded from a
// 64-bit value derived with child_seed().  Results therefore depend only on
// (root seed, index) and never on which thread ran which task.
//
// Frozen choices (changing any of them changes every table on disk):
//   - child_seed(root, i) = mix64(mix64(root) + (i + 1) * 0x9e3779b97f4a7c15)
//     where mix64 is the SplitMix64 finalizer.  For a fixed root the map
//     i -> child_seed is a bijection on 64-bit integers.
//   - Rng is xoshiro256++ with its state filled by four SplitMix64 steps
//     from the seed.
//   - uniform() returns ((x >> 11) + 0.5) * 2^-53, an open (0, 1) variate.
//   - exponential() is the Boost ziggurat sampler driven by this generator.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/exponential_distribution.hpp>

namespace abcdic {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t child_seed(std::uint64_t root, std::uint64_t index) noexcept {
  return mix64(mix64(root) + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept {
    for (auto& word : state_) {
      seed += 0x9e3779b97f4a7c15ULL;
      word = mix64(seed);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform variate on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Integer in [0, n) by 128-bit multiply (bias below 2^-40 for n < 2^24).
  std::size_t index(std::size_t n) noexcept {
    const auto wide = static_cast<unsigned __int128>((*this)()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  double exponential() { return boost::random::exponential_distribution<double>()(*this); }

  /// Standard normal by inversion, so one uniform maps to one draw.
  double normal() { return standard_normal_quantile(uniform()); }

  static double standard_normal_quantile(double u) {
    static const boost::math::normal_distribution<double> unit{};
    return boost::math::quantile(unit, u);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace abcdic
