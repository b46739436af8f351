#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, index), so independent runs, folds and training steps can
// use disjoint streams without sharing generator state.
//
// Generator: Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy
// as 1, 2, 3"). Key = the 64-bit seed split into two 32-bit words; counter =
// (block index low, block index high, stream low, stream high). Each block
// yields four 32-bit words, consumed as two 64-bit words. Uniform doubles use
// the top 53 bits; normals use the Box-Muller transform on consecutive
// uniforms.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace sabvi {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

/// The ten-round Philox4x32 bijection.
inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// SplitMix64 finalizer; used to derive child seeds from a parent seed.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// A child seed for a named purpose (tag) under a parent seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 0x632BE59BD9B4E019ull));
}

/// Sequential view over one (seed, stream) pair.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

  std::uint64_t next_u64() noexcept {
    if (lane_ == 2) refill();
    const std::uint64_t v =
        (static_cast<std::uint64_t>(buf_[2 * lane_]) << 32) | static_cast<std::uint64_t>(buf_[2 * lane_ + 1]);
    ++lane_;
    return v;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1]; safe to take the logarithm of.
  double uniform_pos() noexcept { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  /// Unbiased integer in [0, n) by rejection; n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

 private:
  void refill() noexcept {
    const Philox4x32Counter ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buf_ = philox4x32_10(ctr, key_);
    ++block_;
    lane_ = 0;
  }

  Philox4x32Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Philox4x32Counter buf_{};
  int lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sabvi
