#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "htstab/error.hpp"

namespace htstab {

namespace detail {

// SplitMix64 finalizer (Steele, Lea & Flood). Used for seeding and for
// deriving child stream ids; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// Deterministic random stream identified by (seed, stream).
///
/// The engine is xoshiro256** seeded through SplitMix64, and every variate
/// transform below is written out explicitly, so identical (seed, stream)
/// pairs replay the same sequence on any platform with IEEE doubles. The
/// <random> distributions are not used because their algorithms are
/// implementation-defined.
///
/// Child streams (`split`) are derived from the parent's identity, not its
/// state, so a child is the same no matter how much the parent has consumed.
class SeededRng {
 public:
  using result_type = std::uint64_t;

  SeededRng() : SeededRng(0, 0) {}

  SeededRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::uint64_t key = detail::mix64(seed) ^ detail::rotl(detail::mix64(stream ^ 0xD1B54A32D192ED03ULL), 17);
    for (auto& w : s_) {
      key += 0x9E3779B97F4A7C15ULL;
      w = detail::mix64(key);
    }
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
    const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  SeededRng split(std::uint64_t child) const noexcept {
    return SeededRng(seed_, detail::mix64(detail::mix64(stream_) + 0x632BE59BD9B4E019ULL * (child + 1)));
  }

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform01() noexcept {
    return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
  std::uint64_t uniform_index(std::uint64_t n) {
    detail::require(n > 0, "uniform_index: n must be positive");
    unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // +1 or -1 with equal probability.
  double rademacher() noexcept { return (next() >> 63) ? 1.0 : -1.0; }

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double exponential() noexcept { return -std::log(uniform01()); }

  // Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the U^{1/shape} boost.
  double gamma(double shape) {
    detail::require(shape > 0.0 && std::isfinite(shape), "gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace htstab
