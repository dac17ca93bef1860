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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msv/autodiff.hpp"
#include "msv/baselines.hpp"
#include "msv/early_stop.hpp"
#include "msv/metrics.hpp"
#include "msv/msv_model.hpp"
#include "msv/rng.hpp"
#include "msv/trace.hpp"

namespace msv {

struct TrainConfig {
  double lr_probe = 1e-3;
  double lr_body = 5e-5;
  double lr_mixture = 1e-1;
  double lr_seq_embed = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double warmup_fraction = 0.03;
  double max_grad_norm = 1.0;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  bool shuffle_sequences = true;
  std::vector<double> lr_grid{1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct ParamGroup {
  std::string name;
  double lr = 0.0;
  std::vector<ad::Tensor*> tensors;
};

// Decoupled-weight-decay Adam over named groups.
class AdamW {
 public:
  AdamW(std::vector<ParamGroup> groups, const TrainConfig& config);

  // One update with every group's lr scaled by `lr_factor`; reads .grad().
  void step(double lr_factor);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<ParamGroup> groups_;
  double beta1_, beta2_, eps_, wd_;
  std::vector<std::vector<std::vector<double>>> m_, v_;
  std::size_t t_ = 0;
};

// Rescales all gradients so their global norm is at most max_norm and
// returns the norm before clipping.
double clip_grad_norm(std::span<ad::Tensor* const> tensors, double max_norm);
double grad_norm(std::span<ad::Tensor* const> tensors);

// lr multiplier at 1-based step s.
double warmup_factor(std::size_t step, std::size_t warmup_steps);
std::size_t warmup_steps(const TrainConfig& config, std::size_t total_steps);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // 1-based
  double loss = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
  double lr_factor = 0.0;
  double lr = 0.0;  // primary group
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the initialisation
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct History {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  std::string to_csv() const;
};

// Model-agnostic training problem. `batch_loss` gets the tape, the example
// indices of one batch and an RNG for the batch; `epoch_begin` may rebuild
// the example list (group sampling) and returns its size.
struct Trainable {
  std::vector<ParamGroup> groups;
  std::function<std::size_t(std::size_t epoch, CounterRng& rng)> epoch_begin;
  std::function<ad::Var(ad::Tape&, std::span<const std::size_t>, CounterRng&)> batch_loss;
  std::function<double()> train_loss;
  std::function<std::optional<double>()> val_loss;
};

// Shuffled mini-batches, global-norm clipping, AdamW with warmup; keeps the
// parameters of the epoch with the lowest validation loss (initialisation
// included). Throws NumericError on a non-finite loss.
History run_training(Trainable& model, const TrainConfig& config);

// --- MSV and probe wrappers ---------------------------------------------------

struct MsvTrainResult {
  MsvParams params;
  History history;
};

double base_rate(std::span<const ProblemTrace> traces);

// Traces with more sequences than the effective group size are split per
// epoch into random disjoint groups of that size.
MsvTrainResult train_msv(const MsvConfig& config, const TrainConfig& train_config,
                         std::span<const ProblemTrace> train,
                         std::span<const ProblemTrace> val);

struct ProbeTrainResult {
  ProbeParams params;
  History history;
};

ProbeTrainResult train_probe(std::size_t d, std::size_t hidden, Pooling pooling,
                             const TrainConfig& train_config,
                             std::span<const ProblemTrace> train,
                             std::span<const ProblemTrace> val);

enum class ModelKind { kMsv, kProbe };

// Trains one model per grid value (applied to lr_body for MSV, lr_probe for
// the probe) and returns the value with the lowest validation loss; ties go to
// the smaller value and diverged runs rank last.
struct LrSelection {
  double best_lr = 0.0;
  std::vector<std::pair<double, double>> val_losses;  // (lr, loss or NaN)
  // The winning run, so callers need not retrain it. Empty if all diverged.
  std::optional<MsvTrainResult> msv;
  std::optional<ProbeTrainResult> probe;
};
LrSelection lr_select(ModelKind kind, const MsvConfig& msv_config, std::size_t probe_hidden,
                      const TrainConfig& train_config, std::span<const ProblemTrace> train,
                      std::span<const ProblemTrace> val);

// --- Evaluation ---------------------------------------------------------------

enum class VerifierKind { kMsv, kProbe, kTokenProb, kSelfConsistency };
std::string_view to_string(VerifierKind kind);
VerifierKind parse_verifier_kind(std::string_view name);

struct Verifier {
  VerifierKind kind = VerifierKind::kSelfConsistency;
  std::string name;  // report label
  MsvConfig msv_config;
  MsvParams msv_params;
  ProbeParams probe_params;
  Pooling probe_pooling = Pooling::kLastToken;
};

// Raw per-answer scores of one trace (before any aggregation). MSV traces
// wider than the group size go through group_predict.
PredictionSet score(const Verifier& verifier, const ProblemTrace& trace, std::size_t r,
                    double guard_score);

struct EvalOptions {
  bool weighted_vote = false;
  std::size_t r = kDefaultVoteThreshold;
  double guard_score = 0.5;
  std::size_t ece_bins = 10;
  std::vector<std::int64_t> token_bin_edges;  // empty: no token bins
  std::vector<double> lambda_grid;            // empty: default grid
  std::optional<double> token_budget;         // default: max tau in the set
  std::size_t jobs = 1;
};

struct Report {
  std::string verifier;
  std::string aggregation;
  std::string mode;
  std::size_t n = 0;
  std::size_t problems = 0;
  std::size_t answers = 0;
  std::optional<double> auroc;
  double brier = 0.0;
  double nll = 0.0;
  double ece = 0.0;
  std::vector<ReliabilityBin> reliability;
  BonMetrics bon;
  std::vector<TokenBin> token_bins;
  std::optional<TradeoffCurve> curve;  // streaming only
  std::optional<double> token_budget;
};

// Scores, optionally aggregates, then computes all metrics. Calibration
// metrics cover terminal answers in terminal mode and every answer in
// streaming mode. Throws ContractError when an MSV verifier's mode differs
// from the traces'.
Report evaluate(const Verifier& verifier, std::span<const ProblemTrace> traces,
                const EvalOptions& options);

std::string report_to_string(const Report& report);

}  // namespace msv
