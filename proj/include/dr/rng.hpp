// Copyright 2026 The dreinforce Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dr {

// Philox4x32-10 block function (Salmon et al., SC'11). Pure: the same counter and
// key always give the same four output words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

// SplitMix64 finalizer, used to fold ids into stream numbers.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Derives an independent stream id from a tuple of ids, e.g.
// derive_stream(image_id, reinforcement_index). Order matters.
std::uint64_t derive_stream(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t derive_stream(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept;

// Counter-based generator: key = seed, counter = (position, stream).
// Satisfies UniformRandomBitGenerator, so it can drive <random> distributions.
// Instances are single-owner; parallel code derives streams instead of sharing.
class SeededRng {
 public:
  using result_type = std::uint32_t;

  SeededRng() = default;
  SeededRng(std::uint64_t seed, std::uint64_t stream) noexcept : seed_(seed), stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;
  std::uint64_t next_u64() noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be > 0. Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  // Beta(a, b) via two gamma draws.
  double beta(double a, double b);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  // Number of 32-bit words consumed so far.
  std::uint64_t position() const noexcept { return block_ == 0 ? 0 : (block_ - 1) * 4 + lane_; }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;
  unsigned lane_ = 4;
  std::array<std::uint32_t, 4> buf_{};
};

}  // namespace dr
