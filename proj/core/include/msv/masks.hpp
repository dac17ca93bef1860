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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "msv/answer_equiv.hpp"
#include "msv/autodiff.hpp"
#include "msv/trace.hpp"

namespace msv {

enum class MaskKind { kFull, kWithinSequence, kEquivalence, kWithinAnswer };

// Config names: "full", "within_sequence", "equivalence", "within_answer".
std::string_view to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string_view name);
std::vector<MaskKind> all_mask_kinds();

// Position of one answer token in the flat concatenation (sequence-major,
// then step, then token).
struct TokenIndex {
  std::size_t u = 0;
  std::size_t seq = 0;   // n
  std::size_t step = 0;  // k
  std::size_t ans = 0;   // equivalence class id
  std::int64_t tau = 0;
};

// Tokens of every answer with tau <= t, in concatenation order.
std::vector<TokenIndex> build_token_index(const ProblemTrace& trace, std::int64_t t,
                                          const EquivalencePartition& part);

// In streaming mode every kind except within_answer also requires
// tau(u) >= tau(v); within_answer pairs share tau by construction.
bool allowed(const TokenIndex& u, const TokenIndex& v, MaskKind kind, Mode mode);

class MaskSet {
 public:
  MaskSet() = default;

  const std::vector<MaskKind>& kinds() const noexcept { return kinds_; }
  std::size_t num_masks() const noexcept { return kinds_.size(); }
  std::size_t num_tokens() const noexcept { return tokens_; }
  bool empty() const noexcept { return tokens_ == 0; }
  // Set when within_sequence and within_answer were both requested in
  // terminal mode and collapsed into one.
  bool collapsed_duplicate() const noexcept { return collapsed_; }

  bool permitted(std::size_t j, std::size_t u, std::size_t v) const {
    return matrices_[j][u * tokens_ + v] != 0;
  }
  // 0 for permitted, -inf for masked entries.
  const ad::Tensor& additive(std::size_t j) const { return additive_[j]; }

  friend MaskSet build_masks(std::span<const TokenIndex> tokens,
                             std::span<const MaskKind> enabled, Mode mode);

 private:
  std::vector<MaskKind> kinds_;
  std::vector<std::vector<std::uint8_t>> matrices_;
  std::vector<ad::Tensor> additive_;
  std::size_t tokens_ = 0;
  bool collapsed_ = false;
};

// Masks over the tokens of answers with tau <= t. Returns an empty set (no
// tokens) when nothing has been emitted by t. Throws PreconditionError when
// `enabled` is empty.
MaskSet build_masks(const ProblemTrace& trace, std::int64_t t,
                    const EquivalencePartition& part, std::span<const MaskKind> enabled,
                    Mode mode);
MaskSet build_masks(std::span<const TokenIndex> tokens, std::span<const MaskKind> enabled,
                    Mode mode);

}  // namespace msv
