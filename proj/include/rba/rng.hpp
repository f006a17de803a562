#pragma once

// Counter-based random streams (Philox4x32-10).
//
// Every stream is addressed by (master seed, stream id, purpose). The seed is
// the Philox key; stream id and purpose occupy the upper counter words, and
// the lower 64 bits count 128-bit blocks. Distinct (stream id, purpose)
// pairs therefore never share a counter value under one seed.

#include <array>
#include <cstdint>
#include <limits>

namespace rba {

enum class StreamPurpose : std::uint32_t {
  block_size = 1,
  subset = 2,
  chunk = 3,
  ledger = 4,
  probe_blocks = 5,
  probe_chunks = 6,
  direct_sampler = 7,
  probe_sizes = 8,
  test = 15,
};

class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using ctr_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  Philox4x32(std::uint64_t seed, std::uint32_t stream_id, StreamPurpose purpose)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_id_(stream_id),
        purpose_(static_cast<std::uint32_t>(purpose)) {}

  /// Raw 10-round bijection; exposed for known-answer tests.
  static constexpr ctr_type bijection(ctr_type ctr, key_type key) {
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

  result_type operator()() {
    if (index_ == 4) refill();
    return buffer_[index_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = (*this)();
    return (hi << 32) | (*this)();
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    // Lemire's multiply-shift with rejection of the biased low region.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t blocks_consumed() const { return block_; }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;

  void refill() {
    const ctr_type ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                       stream_id_, purpose_};
    buffer_ = bijection(ctr, key_);
    ++block_;
    index_ = 0;
  }

  key_type key_;
  std::uint32_t stream_id_;
  std::uint32_t purpose_;
  std::uint64_t block_ = 0;
  ctr_type buffer_{};
  int index_ = 4;
};

inline Philox4x32 make_stream(std::uint64_t seed, std::uint64_t stream_id, StreamPurpose purpose) {
  return Philox4x32(seed, static_cast<std::uint32_t>(stream_id), purpose);
}

}  // namespace rba
