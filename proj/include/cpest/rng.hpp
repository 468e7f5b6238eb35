#pragma once

#include <cmath>
#include <cstdint>

namespace cpest {

/**
 * @brief Counter-based pseudo-random substream.
 *
 * A 64-bit LCG with a stream-specific odd increment and a splitmix64-style
 * output mix. The state of substream (seed, k) is fully determined by the two
 * integers, so trial k can be replayed, skipped or scheduled on any worker
 * without coordination; summing per-trial results is then independent of the
 * worker partition.
 */
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : state_(mix64(seed + 0x9e3779b97f4a7c15ull)),
        inc_((mix64(stream + 0xda942042e4dd58b5ull) << 1) | 1ull) {
    state_ += inc_;
    (void)next_u64();
  }

  std::uint64_t next_u64() noexcept {
    state_ = state_ * 6364136223846793005ull + inc_;
    return mix64(state_);
  }

  /// Uniform draw in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw (Box-Muller pair, second value cached).
  double normal() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 =
        static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_;
  std::uint64_t inc_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cpest
