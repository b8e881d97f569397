// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "ivmix/core/latent.hpp"

namespace ivmix {

/// Seed plus substream index. Draws depend only on (seed, stream_id, draw count).
struct RunSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  RunSeed substream(std::uint64_t id) const noexcept { return {seed, id}; }
  friend bool operator==(const RunSeed&, const RunSeed&) = default;
};

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u;
  constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

/// Counter-based generator: block k of stream s under seed z is philox(k, s; z).
/// Each worker owns its own instance; instances are cheap to create.
class NoiseStream {
 public:
  explicit NoiseStream(RunSeed seed) : seed_(seed) {}

  const RunSeed& seed() const noexcept { return seed_; }
  std::uint64_t blocks_used() const noexcept { return counter_; }

  std::array<std::uint32_t, 4> next_block() {
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                              static_cast<std::uint32_t>(seed_.stream_id),
                                              static_cast<std::uint32_t>(seed_.stream_id >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_.seed),
                                              static_cast<std::uint32_t>(seed_.seed >> 32)};
    ++counter_;
    return philox4x32(ctr, key);
  }

  /// Uniform in (0, 1), 53 bits.
  double uniform() {
    if (cached_words_ == 0) {
      block_ = next_block();
      cached_words_ = 2;
    }
    const int base = cached_words_ == 2 ? 0 : 2;
    --cached_words_;
    const std::uint64_t bits = (static_cast<std::uint64_t>(block_[base]) << 32 | block_[base + 1]) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are consumed in order.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  LatentTensor normal_tensor(const Shape5& shape) {
    LatentTensor out(shape);
    for (double& v : out.data()) v = normal();
    return out;
  }

 private:
  RunSeed seed_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int cached_words_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ivmix
