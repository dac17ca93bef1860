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

#include "msv/masks.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace msv {

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::kFull: return "full";
    case MaskKind::kWithinSequence: return "within_sequence";
    case MaskKind::kEquivalence: return "equivalence";
    case MaskKind::kWithinAnswer: return "within_answer";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string_view name) {
  for (MaskKind k : all_mask_kinds())
    if (to_string(k) == name) return k;
  throw ValidationError("unknown mask kind '" + std::string(name) + "'");
}

std::vector<MaskKind> all_mask_kinds() {
  return {MaskKind::kFull, MaskKind::kWithinSequence, MaskKind::kEquivalence,
          MaskKind::kWithinAnswer};
}

std::vector<TokenIndex> build_token_index(const ProblemTrace& trace, std::int64_t t,
                                          const EquivalencePartition& part) {
  std::vector<TokenIndex> out;
  for (const auto& seq : trace.sequences) {
    for (const auto& a : seq.answers) {
      if (a.tau > t) continue;
      const std::size_t cls = part.class_id(a.key());
      for (std::size_t i = 0; i < a.length(); ++i) {
        out.push_back({out.size(), a.seq_index, a.step, cls, a.tau});
      }
    }
  }
  return out;
}

bool allowed(const TokenIndex& u, const TokenIndex& v, MaskKind kind, Mode mode) {
  const bool causal = mode == Mode::kTerminal || u.tau >= v.tau;
  switch (kind) {
    case MaskKind::kFull: return causal;
    case MaskKind::kWithinSequence: return u.seq == v.seq && causal;
    case MaskKind::kEquivalence: return u.ans == v.ans && causal;
    case MaskKind::kWithinAnswer: return u.seq == v.seq && u.step == v.step;
  }
  return false;
}

MaskSet build_masks(std::span<const TokenIndex> tokens, std::span<const MaskKind> enabled,
                    Mode mode) {
  if (enabled.empty()) throw PreconditionError("build_masks: no mask kinds enabled");
  MaskSet set;
  for (MaskKind k : enabled) {
    if (std::find(set.kinds_.begin(), set.kinds_.end(), k) != set.kinds_.end()) continue;
    const bool seq_or_answer = k == MaskKind::kWithinSequence || k == MaskKind::kWithinAnswer;
    if (mode == Mode::kTerminal && seq_or_answer) {
      const MaskKind twin =
          k == MaskKind::kWithinSequence ? MaskKind::kWithinAnswer : MaskKind::kWithinSequence;
      if (std::find(set.kinds_.begin(), set.kinds_.end(), twin) != set.kinds_.end()) {
        set.collapsed_ = true;
        continue;
      }
    }
    set.kinds_.push_back(k);
  }
  const std::size_t n = tokens.size();
  set.tokens_ = n;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (MaskKind k : set.kinds_) {
    std::vector<std::uint8_t> m(n * n, 0);
    ad::Tensor add(n, n, kNegInf);
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        if (allowed(tokens[u], tokens[v], k, mode)) {
          m[u * n + v] = 1;
          add(u, v) = 0.0;
        }
      }
    }
    set.matrices_.push_back(std::move(m));
    set.additive_.push_back(std::move(add));
  }
  return set;
}

MaskSet build_masks(const ProblemTrace& trace, std::int64_t t, const EquivalencePartition& part,
                    std::span<const MaskKind> enabled, Mode mode) {
  const auto tokens = build_token_index(trace, t, part);
  return build_masks(tokens, enabled, mode);
}

}  // namespace msv
