#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace macrokin {

// Seed of an ensemble plus the id of one trajectory's substream.
struct RngSeed {
  std::uint64_t seed = 42;
  std::uint64_t stream = 0;

  RngSeed substream(std::uint64_t id) const { return RngSeed{seed, id}; }
};

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The key is
// the 64-bit seed, the upper half of the 128-bit counter is the stream id,
// so every (seed, stream) pair is an independent reproducible sequence.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  explicit Philox4x32(RngSeed s = {})
      : key_{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32)},
        ctr_{0, 0, static_cast<std::uint32_t>(s.stream), static_cast<std::uint32_t>(s.stream >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }

  result_type operator()() {
    if (idx_ == 4) {
      buf_ = block(ctr_, key_);
      if (++ctr_[0] == 0) ++ctr_[1];
      idx_ = 0;
    }
    return buf_[idx_++];
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 5;  // 27 bits
    const std::uint64_t lo = (*this)() >> 6;  // 26 bits
    return static_cast<double>((hi << 26) | lo) * 0x1.0p-53;
  }

  // Uniform double in the open interval (0, 1).
  double uniform_open() {
    const std::uint64_t hi = (*this)() >> 5;
    const std::uint64_t lo = (*this)() >> 6;
    return (static_cast<double>((hi << 26) | lo) + 0.5) * 0x1.0p-53;
  }

  // Exponential variate with the given rate (> 0); never exactly zero.
  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  static Counter block(Counter ctr, Key key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += w0;
      key[1] += w1;
    }
    return ctr;
  }

 private:
  Key key_;
  Counter ctr_;
  Counter buf_{};
  int idx_ = 4;
};

}  // namespace macrokin
