/*
 * Copyright 2026 The MSV Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace msv {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11 constants).
//
// The 64-bit seed is the key; the 128-bit counter is split into a 64-bit
// block index and a 64-bit stream id, so independent streams (one per
// problem, one per training epoch, ...) never overlap. All derived draws
// below are defined in terms of next_u64() only, which makes fixtures
// bit-reproducible on any platform:
//
//   uniform()      = (next_u64() >> 11) * 2^-53                in [0, 1)
//   normal()       = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)        Box-Muller, one
//                                                              output per pair
//   uniform_int(n) = floor(uniform() * n)                      in [0, n)
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();
  double normal();
  std::size_t uniform_int(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates, drawing j = uniform_int(i + 1) for i = n-1 .. 1.
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t block_ = 0;
  std::uint64_t stream_;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

// SplitMix64 finalizer; used to derive child seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace msv
