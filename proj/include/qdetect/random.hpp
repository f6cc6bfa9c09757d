#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace qdetect {

/// SplitMix64, used only to expand seeds into generator state.
class SplitMix64 {
public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

private:
  std::uint64_t state_;
};

/// xoshiro256++ (Blackman & Vigna). Satisfies UniformRandomBitGenerator.
class Xoshiro256pp {
public:
  using result_type = std::uint64_t;

  explicit constexpr Xoshiro256pp(std::uint64_t seed = 0) noexcept {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm();
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  friend constexpr bool operator==(const Xoshiro256pp&, const Xoshiro256pp&) = default;

private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4]{};
};

using Rng = Xoshiro256pp;

/// Stream for replication `index` under `master_seed`. Depends only on the
/// pair, so replications can be scheduled on any worker.
inline Rng derive_stream(std::uint64_t master_seed, std::uint64_t index) noexcept {
  SplitMix64 mix(master_seed);
  const std::uint64_t k0 = mix();
  SplitMix64 mix2(k0 ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  return Rng(mix2());
}

/// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) noexcept {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Uniform on [lo, hi).
inline double uniform(Rng& rng, double lo, double hi) noexcept {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// Exponential with the given rate, by inverse transform.
inline double exponential(Rng& rng, double rate) noexcept {
  return -std::log(uniform_open(rng)) / rate;
}

/// Number of failures before the first success in Bernoulli(p) trials.
inline std::uint64_t geometric_failures(Rng& rng, double p) noexcept {
  if (p >= 1.0) return 0;
  const double g = std::floor(std::log(uniform_open(rng)) / std::log1p(-p));
  if (!(g < 0x1.0p63)) return std::uint64_t{1} << 63;
  return static_cast<std::uint64_t>(g);
}

} // namespace qdetect
