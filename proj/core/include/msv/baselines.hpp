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
#include <string>
#include <vector>

#include "msv/answer_equiv.hpp"
#include "msv/autodiff.hpp"
#include "msv/msv_model.hpp"
#include "msv/trace.hpp"

namespace msv {

// Single-sequence probe: d -> hidden -> 1 with gelu.
struct ProbeParams {
  ad::Tensor w1, b1;  // d x hidden, 1 x hidden
  ad::Tensor w2, b2;  // hidden x 1, 1 x 1

  std::vector<std::pair<std::string, ad::Tensor*>> named();
  friend bool operator==(const ProbeParams&, const ProbeParams&) = default;
};

ProbeParams init_probe(std::size_t d, std::size_t hidden, std::uint64_t seed, double base_rate);

// Pooled feature of one answer (last token or token mean), 1 x d.
ad::Tensor probe_feature(const AnswerRecord& answer, Pooling pooling);

// Logits (A x 1) for stacked features (A x d).
ad::Var probe_logits(ad::Tape& tape, ProbeParams& params, const ad::Tensor& features);

// Every answer scored independently.
PredictionSet probe_predict(const ProblemTrace& trace, const ProbeParams& params,
                            Pooling pooling = Pooling::kLastToken);

// exp(mean logprob). Throws PreconditionError without logprobs.
double token_prob_score(const AnswerRecord& answer);
PredictionSet token_prob_predict(const ProblemTrace& trace);

inline constexpr std::size_t kDefaultVoteThreshold = 16;

// Terminal: class sum / total. Streaming: over answers with tau <= tau_k; when
// that count does not exceed R the raw probability is returned.
// Throws ContractError on an empty set.
PredictionSet weighted_vote(const PredictionSet& predictions, const EquivalencePartition& part,
                            Mode mode, std::size_t r = kDefaultVoteThreshold);

// Vote counts only. Streaming answers with at most R candidates decoded get
// `guard_score`, the value a constant-score verifier would pass through.
PredictionSet self_consistency(const ProblemTrace& trace, const EquivalencePartition& part,
                               Mode mode, std::size_t r = kDefaultVoteThreshold,
                               double guard_score = 0.5);

}  // namespace msv
