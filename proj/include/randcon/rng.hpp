#pragma once

#include <array>
#include <cstdint>
#include <limits>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

namespace randcon {

// Philox4x32-10 counter-based generator (Salmon et al., Random123). Each
// (key, stream) pair names an independent sequence; the block counter walks
// that sequence. Output does not depend on the standard library in use, so
// seeded experiments replay bit-identically across toolchains.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t key = 0, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (lane_ == 2) {
      block_ = generate(block_index_++);
      lane_ = 0;
    }
    const auto lo = static_cast<std::uint64_t>(block_[2 * lane_]);
    const auto hi = static_cast<std::uint64_t>(block_[2 * lane_ + 1]);
    ++lane_;
    return lo | (hi << 32);
  }

  // Single raw block for a counter value; exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  std::array<std::uint32_t, 4> generate(std::uint64_t index) const noexcept {
    return block({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                  static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                 key_);
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int lane_ = 2;
};

// Stream tags keep the draws of different pipeline stages disjoint even when
// they share a seed.
enum class Stream : std::uint64_t {
  kernels = 1,
  patterns = 2,
  sequence = 3,
  latent = 4,
  noise = 5,
  kmeans = 6,
  projection = 7,
};

inline Philox make_rng(std::uint64_t seed, Stream stream) noexcept {
  return Philox(seed, static_cast<std::uint64_t>(stream));
}

// Per-item seeds: seed XOR item index (kernel, subject, restart).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return seed ^ index;
}

// SplitMix64 finalizer; used to spread composite keys (sweep cells).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t value) noexcept {
  return mix64(seed ^ mix64(value));
}

inline double standard_normal(Philox& rng) {
  boost::random::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

inline double uniform01(Philox& rng) {
  boost::random::uniform_01<double> dist;
  return dist(rng);
}

// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Philox& rng, std::int64_t lo, std::int64_t hi) {
  boost::random::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return dist(rng);
}

inline double gamma_draw(Philox& rng, double shape, double scale) {
  boost::random::gamma_distribution<double> dist(shape, scale);
  return dist(rng);
}

}  // namespace randcon
