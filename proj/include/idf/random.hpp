#pragma once

// Deterministic random numbers. Every stream is a Philox4x32-10 counter-based
// generator keyed by a 64-bit seed, so a stream is fully determined by its key
// and independent of scheduling. Distributions are implemented here rather than
// taken from <random> because the standard distributions are not specified
// bit-for-bit across library implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>
#include <type_traits>

namespace idf {

class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (index_ == 4) {
      block_ = encrypt(counter_, key_);
      increment();
      index_ = 0;
    }
    return block_[index_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = (*this)();
    return (hi << 32) | (*this)();
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Single Philox4x32-10 block; exposed for known-answer testing.
  static Counter encrypt(Counter ctr, Key key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  void increment() noexcept {
    for (auto& word : counter_) {
      if (++word != 0) break;
    }
  }

  Key key_;
  Counter counter_{};
  Counter block_{};
  int index_ = 4;
};

/// SplitMix64 finalizer; used to spread hashed keys over all 64 bits.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Stable across platforms and runs (FNV-1a over the bytes, then mixed).
constexpr std::uint64_t stable_hash(std::string_view text, std::uint64_t basis = 0xCBF29CE484222325ull) noexcept {
  std::uint64_t h = basis;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return mix64(h);
}

namespace detail {
constexpr std::uint64_t combine(std::uint64_t seed, std::string_view part) noexcept {
  // separator keeps ("ab","c") and ("a","bc") apart
  return stable_hash(part, mix64(seed ^ 0x2545F4914F6CDD1Dull));
}
constexpr std::uint64_t combine(std::uint64_t seed, std::int64_t part) noexcept {
  return mix64(mix64(seed) ^ static_cast<std::uint64_t>(part));
}
}  // namespace detail

/// Derives a child seed from a master seed and an ordered key tuple.
template <class... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t master, const Parts&... parts) noexcept {
  std::uint64_t seed = master;
  ((seed = [&] {
     if constexpr (std::is_convertible_v<const Parts&, std::string_view>) {
       return detail::combine(seed, std::string_view(parts));
     } else {
       return detail::combine(seed, static_cast<std::int64_t>(parts));
     }
   }()),
   ...);
  return seed;
}

inline double standard_normal(Philox4x32& rng) noexcept {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Gamma(shape, 1) by Marsaglia-Tsang, with the shape < 1 boost.
inline double gamma_variate(Philox4x32& rng, double shape) noexcept {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_variate(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0, v = 0.0;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double beta_variate(Philox4x32& rng, double a, double b) noexcept {
  const double x = gamma_variate(rng, a);
  const double y = gamma_variate(rng, b);
  const double total = x + y;
  if (total <= 0.0) return rng.uniform() < 0.5 ? 0.0 : 1.0;
  return x / total;
}

inline double exponential_variate(Philox4x32& rng, double mean) noexcept {
  return -mean * std::log(rng.uniform());
}

}  // namespace idf
