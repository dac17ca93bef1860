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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msv/msv_model.hpp"
#include "msv/trace.hpp"

namespace msv {

struct ScoredItem {
  double p = 0.0;
  int y = 0;
  std::string problem_id;
  AnswerKey key;
  std::int64_t tau = 0;
};

struct ScoredSet {
  std::vector<ScoredItem> items;

  void add(double p, int y) { items.push_back({p, y, {}, {}, 0}); }
  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }
};

// Builds a set from labelled answers of `trace` present in `predictions`.
// Throws PreconditionError on an unlabelled answer.
void append_scored(ScoredSet& set, const ProblemTrace& trace, const PredictionSet& predictions);

// Pr[p+ > p-] + 1/2 Pr[p+ = p-] via mid-ranks; nullopt for a single-class set.
std::optional<double> auroc(const ScoredSet& set);
double brier(const ScoredSet& set);
double nll(const ScoredSet& set);

struct ReliabilityBin {
  double lo = 0.0, hi = 0.0;
  double confidence = 0.0;  // mean p, 0 when empty
  double accuracy = 0.0;    // mean y, 0 when empty
  std::size_t count = 0;
};

struct EceResult {
  double ece = 0.0;
  std::vector<ReliabilityBin> bins;
};

// Equal-width bins on [0,1]; the last bin is closed on the right.
EceResult ece(const ScoredSet& set, std::size_t num_bins = 10);

struct BestOfN {
  AnswerKey chosen;
  double confidence = 0.0;
};

// Argmax over terminal answers, lowest n on ties.
BestOfN best_of_n(const ProblemTrace& trace, const PredictionSet& predictions);

struct BonMetrics {
  double accuracy = 0.0;
  double ece = 0.0;
  double brier = 0.0;
  std::size_t problems = 0;
};

BonMetrics bon_metrics(std::span<const ProblemTrace> traces,
                       std::span<const PredictionSet> predictions, std::size_t num_bins = 10);

struct TokenBin {
  std::int64_t lo = 0, hi = 0;  // [lo, hi), the last bin includes hi
  std::size_t count = 0;
  std::optional<double> brier;  // absent for an empty bin
};

// `edges` must be strictly increasing with at least two entries.
std::vector<TokenBin> brier_by_token_bins(const ScoredSet& set,
                                          std::span<const std::int64_t> edges);

}  // namespace msv
