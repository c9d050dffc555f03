#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

// Counter-based random streams. Every (seed, level, sample, purpose) key
// addresses its own Philox4x32-10 stream, so a sample's draws never depend
// on which thread produced it or on what other samples consumed.

namespace amlmc {

enum class StreamPurpose : std::uint32_t {
  InitialIncrements = 0,
  BridgeNoise = 1,
  Auxiliary = 2,
};

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t level = 0;
  std::uint64_t sample_index = 0;
  StreamPurpose purpose = StreamPurpose::InitialIncrements;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

using PhiloxBlock = std::array<std::uint32_t, 4>;

constexpr void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                         std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
constexpr PhiloxBlock philox4x32_10(PhiloxBlock ctr, std::uint64_t key64) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  std::uint32_t k0 = static_cast<std::uint32_t>(key64);
  std::uint32_t k1 = static_cast<std::uint32_t>(key64 >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
    mulhilo32(kM0, ctr[0], hi0, lo0);
    mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kW0;
    k1 += kW1;
  }
  return ctr;
}

/// Maps 52 random bits to the open interval (0, 1); with 53 the top value
/// would round to 1.
constexpr double open_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

}  // namespace detail

/// Deterministic source of standard normal and uniform variates.
///
/// Draw slot k (counting every normal() and uniform() call) is a pure
/// function of (key, k). Slots 2j and 2j+1 share Philox block j; normals
/// come from Box-Muller on that block's two 64-bit halves (cos for the even
/// slot, sin for the odd one), uniforms from the slot's own half.
class GaussianStream {
 public:
  explicit GaussianStream(const StreamKey& key)
      : key64_(detail::splitmix64(
            detail::splitmix64(detail::splitmix64(key.seed) ^ key.level) ^
            (static_cast<std::uint64_t>(key.purpose) << 32))),
        sample_(key.sample_index) {}

  double normal() {
    const std::uint64_t slot = slot_++;
    load(slot >> 1);
    const double radius = std::sqrt(-2.0 * std::log(detail::open_unit(words_[0])));
    const double angle = 2.0 * std::numbers::pi * detail::open_unit(words_[1]);
    return (slot & 1U) == 0 ? radius * std::cos(angle) : radius * std::sin(angle);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    const std::uint64_t slot = slot_++;
    load(slot >> 1);
    return detail::open_unit(words_[slot & 1U]);
  }

  std::uint64_t draws_consumed() const { return slot_; }

 private:
  void load(std::uint64_t block) {
    if (block == cached_block_) return;
    const detail::PhiloxBlock out = detail::philox4x32_10(
        {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
         static_cast<std::uint32_t>(sample_), static_cast<std::uint32_t>(sample_ >> 32)},
        key64_);
    words_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    words_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    cached_block_ = block;
  }

  std::uint64_t key64_;
  std::uint64_t sample_;
  std::uint64_t slot_ = 0;
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  std::array<std::uint64_t, 2> words_{};
};

inline GaussianStream stream_for(const StreamKey& key) { return GaussianStream(key); }

/// The three streams one Monte Carlo sample draws from.
struct SampleStreams {
  GaussianStream increments;
  GaussianStream bridge;
  GaussianStream auxiliary;

  static SampleStreams make(std::uint64_t seed, std::uint32_t level,
                            std::uint64_t sample_index) {
    return {stream_for({seed, level, sample_index, StreamPurpose::InitialIncrements}),
            stream_for({seed, level, sample_index, StreamPurpose::BridgeNoise}),
            stream_for({seed, level, sample_index, StreamPurpose::Auxiliary})};
  }
};

}  // namespace amlmc
