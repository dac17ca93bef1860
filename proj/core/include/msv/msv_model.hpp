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
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msv/answer_equiv.hpp"
#include "msv/autodiff.hpp"
#include "msv/masks.hpp"
#include "msv/trace.hpp"

namespace msv {

enum class Pooling { kLastToken, kMeanTokens };

std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view name);

inline constexpr std::int64_t kReadAll = std::numeric_limits<std::int64_t>::max();

struct MsvConfig {
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::vector<MaskKind> masks = all_mask_kinds();
  Mode mode = Mode::kTerminal;
  std::size_t n_max = 8;
  bool feature_augmentation = true;
  // Terminal only: average logits over each equivalence class.
  bool logit_averaging = true;
  // Streaming ablation: causal class averaging of logits.
  bool streaming_logit_averaging = false;
  Pooling pooling = Pooling::kLastToken;
  // Group size M used by group_predict; 0 means n_max.
  std::size_t group_size = 0;

  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t mlp_hidden() const { return 4 * d_model; }
  std::size_t effective_group_size() const { return group_size == 0 ? n_max : group_size; }
  // Mask kinds after the terminal within_sequence/within_answer collapse.
  std::vector<MaskKind> effective_masks() const;

  // Throws ValidationError on a broken invariant.
  void validate() const;

  friend bool operator==(const MsvConfig&, const MsvConfig&) = default;
};

// All learnable tensors. Per-head projections are stored separately; the
// mixture logits hold one row w_h per head.
struct MsvParams {
  ad::Tensor seq_embed;                 // n_max x d
  std::vector<ad::Tensor> w_q, w_k, w_v;  // H x (d x d_head)
  std::vector<ad::Tensor> w_o;          // H x (d_head x d)
  ad::Tensor mix_logits;                // H x J
  ad::Tensor ln_gain, ln_bias;          // 1 x d
  ad::Tensor mlp_w1, mlp_b1;            // d x 4d, 1 x 4d
  ad::Tensor mlp_w2, mlp_b2;            // 4d x d, 1 x d
  ad::Tensor gamma_w1, gamma_b1;        // 1 x d, 1 x d
  ad::Tensor gamma_w2, gamma_b2;        // d x d, 1 x d
  ad::Tensor head_w;                    // d x 1
  ad::Tensor head_b;                    // 1 x 1

  // Stable (name, tensor) listing; names are the checkpoint keys.
  std::vector<std::pair<std::string, ad::Tensor*>> named();
  std::vector<std::pair<std::string, const ad::Tensor*>> named() const;

  friend bool operator==(const MsvParams&, const MsvParams&) = default;
};

// Projections ~ N(0, 1/d_model), seq_embed ~ N(0, 0.02^2), mixture logits 0,
// gamma-MLP output layer 0, head w = 0 and b = logit(base_rate).
MsvParams init_params(const MsvConfig& config, std::uint64_t seed, double base_rate);

struct Prediction {
  AnswerKey key;
  std::int64_t tau = 0;
  double logit = 0.0;
  double prob = 0.5;
};

struct PredictionSet {
  std::int64_t t = kReadAll;
  std::vector<Prediction> entries;  // concatenation order

  bool empty() const noexcept { return entries.empty(); }
  const Prediction& at(AnswerKey key) const;
  std::optional<double> prob(AnswerKey key) const;
};

// U^(t) = rows h_{k,i}^(n) + e^(n) for answers with tau <= t.
struct AssembledInput {
  Matrix u;
  std::vector<TokenIndex> tokens;
};

// Throws PreconditionError when no answer has tau <= t and CapacityError when
// a sequence index exceeds n_max.
AssembledInput assemble_input(const MsvConfig& config, const MsvParams& params,
                              const ProblemTrace& trace, std::int64_t t,
                              const EquivalencePartition& part);

// Everything about (trace, t) that does not depend on parameters.
struct PreparedInput {
  std::vector<TokenIndex> tokens;
  std::vector<std::size_t> seq_of_token;  // 0-based
  ad::Tensor hidden;                      // T x d raw hidden states
  MaskSet masks;
  std::vector<AnswerKey> answers;
  std::vector<std::int64_t> taus;
  ad::Tensor pool;       // A x T pooling weights
  ad::Tensor gamma;      // A x 1 vote fractions
  ad::Tensor averaging;  // A x A logit averaging, empty when disabled
  std::vector<double> labels;  // empty unless every answer is labelled
};

PreparedInput prepare_input(const MsvConfig& config, const ProblemTrace& trace,
                            std::int64_t t, const EquivalencePartition& part);

// Parameters bound as leaves on one tape.
struct BoundParams {
  ad::Var seq_embed;
  std::vector<ad::Var> w_q, w_k, w_v, w_o;
  ad::Var mix_logits, ln_gain, ln_bias, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  ad::Var gamma_w1, gamma_b1, gamma_w2, gamma_b2, head_w, head_b;
};

BoundParams bind(ad::Tape& tape, MsvParams& params);

// Multi-mask transformer block: per head h and mask j,
// A_hj = softmax(Q_h K_h^T / sqrt(d_head) + log M_j) V_h; the mixture
// U~ = sum_h sum_j alpha_hj A_hj W_O,h with alpha_h = softmax(w_h); then
// Z = (U + U~) + MLP(LN(U + U~)).
ad::Var mmtb_forward(const MsvConfig& config, const BoundParams& p, ad::Var u,
                     const MaskSet& masks);
Matrix mmtb_forward(const MsvConfig& config, const MsvParams& params, const Matrix& u,
                    const MaskSet& masks);

// Per-answer logits (A x 1) for a prepared input. `slots` optionally maps
// sequence n (0-based) to an embedding row; identity when empty.
ad::Var forward_logits(const MsvConfig& config, const BoundParams& p,
                       const PreparedInput& in, std::span<const std::size_t> slots = {});

// Predictions for every answer with tau <= t (terminal mode reads all).
PredictionSet predict(const MsvConfig& config, const MsvParams& params,
                      const ProblemTrace& trace, std::int64_t t,
                      const EquivalencePartition& part);
PredictionSet predict(const MsvConfig& config, const MsvParams& params,
                      const ProblemTrace& trace);

// Summed BCE over every scored answer of every trace: all intermediate and
// terminal answers in streaming mode, terminal answers in terminal mode.
// Throws ContractError for an unlabelled answer.
ad::Var loss(ad::Tape& tape, const MsvConfig& config, const BoundParams& p,
             std::span<const PreparedInput> batch,
             std::span<const std::vector<std::size_t>> slots = {});
double loss(const MsvConfig& config, const MsvParams& params,
            std::span<const ProblemTrace> traces);

// Splits the N sequences into consecutive groups of M (the last one may be
// smaller), scores each group independently with group-local sequence
// numbering and vote fractions, and merges the results under the original
// (n, k) keys.
PredictionSet group_predict(const MsvConfig& config, const MsvParams& params,
                            const ProblemTrace& trace, std::size_t group_size);

// KV-cached streaming scorer. Each added answer is scored against the cached
// keys/values of all earlier answer tokens plus its own tokens; earlier
// scores are never revised.
class IncrementalSession {
 public:
  IncrementalSession(MsvConfig config, const MsvParams& params, std::size_t num_sequences);

  // Throws OrderingError if tau decreases, PreconditionError outside
  // streaming mode.
  Prediction add(const AnswerRecord& answer);

  const PredictionSet& predictions() const noexcept { return predictions_; }
  std::size_t cached_tokens() const noexcept { return tokens_.size(); }

 private:
  MsvConfig config_;
  const MsvParams& params_;
  std::size_t num_sequences_;
  std::vector<ad::Tensor> alpha_;            // per head, 1 x J
  std::vector<std::vector<double>> keys_;    // per head, row-major T x d_head
  std::vector<std::vector<double>> values_;  // per head
  std::vector<TokenIndex> tokens_;
  std::map<std::string, std::size_t> classes_;
  std::vector<std::optional<std::size_t>> latest_class_;  // per sequence
  std::vector<std::size_t> last_step_;
  struct Emitted {
    std::size_t first, len, cls;
    std::int64_t tau;
    double logit;  // raw, before averaging
  };
  double score(std::size_t first, std::size_t len, std::size_t cls) const;

  std::vector<std::vector<double>> rows_;  // U rows of cached tokens
  std::vector<Emitted> emitted_;
  std::int64_t last_tau_ = std::numeric_limits<std::int64_t>::min();
  PredictionSet predictions_;
};

// Checkpoint: {"format_version", "config", "params": {name: nested rows}}.
std::string checkpoint_to_string(const MsvConfig& config, const MsvParams& params);
std::pair<MsvConfig, MsvParams> checkpoint_from_string(std::string_view text);

}  // namespace msv
