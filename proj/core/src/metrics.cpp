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

#include "msv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msv {
namespace {

void require_nonempty(const ScoredSet& set) {
  if (set.empty()) throw ContractError("metric on an empty set");
}

}  // namespace

void append_scored(ScoredSet& set, const ProblemTrace& trace, const PredictionSet& predictions) {
  for (const Prediction& pr : predictions.entries) {
    const AnswerRecord& a = trace.answer(pr.key);
    if (!a.label) throw PreconditionError("answer (" + std::to_string(pr.key.n) + "," +
                                          std::to_string(pr.key.k) + ") of " + trace.problem_id +
                                          " has no label");
    set.items.push_back({pr.prob, *a.label, trace.problem_id, pr.key, pr.tau});
  }
}

std::optional<double> auroc(const ScoredSet& set) {
  require_nonempty(set);
  const std::size_t m = set.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.items[a].p < set.items[b].p; });
  std::vector<double> rank(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && set.items[order[j + 1]].p == set.items[order[i]].p) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) rank[order[q]] = mid;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (set.items[i].y == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(m) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double brier(const ScoredSet& set) {
  require_nonempty(set);
  double s = 0.0;
  for (const auto& it : set.items) s += (it.p - it.y) * (it.p - it.y);
  return s / static_cast<double>(set.size());
}

double nll(const ScoredSet& set) {
  require_nonempty(set);
  double s = 0.0;
  for (const auto& it : set.items) {
    const double p = std::clamp(it.p, 1e-12, 1.0 - 1e-12);
    s -= it.y == 1 ? std::log(p) : std::log1p(-p);
  }
  return s / static_cast<double>(set.size());
}

EceResult ece(const ScoredSet& set, std::size_t num_bins) {
  require_nonempty(set);
  if (num_bins == 0) throw PreconditionError("ece needs at least one bin");
  EceResult out;
  out.bins.resize(num_bins);
  std::vector<double> psum(num_bins, 0.0), ysum(num_bins, 0.0);
  const double j = static_cast<double>(num_bins);
  for (const auto& it : set.items) {
    auto b = static_cast<std::size_t>(std::floor(std::clamp(it.p, 0.0, 1.0) * j));
    b = std::min(b, num_bins - 1);
    psum[b] += it.p;
    ysum[b] += it.y;
    ++out.bins[b].count;
  }
  const double m = static_cast<double>(set.size());
  for (std::size_t b = 0; b < num_bins; ++b) {
    ReliabilityBin& bin = out.bins[b];
    bin.lo = static_cast<double>(b) / j;
    bin.hi = static_cast<double>(b + 1) / j;
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.confidence = psum[b] / c;
    bin.accuracy = ysum[b] / c;
    out.ece += c / m * std::abs(bin.accuracy - bin.confidence);
  }
  return out;
}

BestOfN best_of_n(const ProblemTrace& trace, const PredictionSet& predictions) {
  if (trace.sequences.empty()) throw ContractError("best-of-N on a trace without sequences");
  BestOfN best;
  bool found = false;
  for (std::size_t n = 1; n <= trace.num_sequences(); ++n) {
    const AnswerKey key = trace.terminal(n).key();
    const auto p = predictions.prob(key);
    if (!p) throw ContractError("missing terminal prediction for sequence " + std::to_string(n));
    if (!found || *p > best.confidence) {
      best = {key, *p};
      found = true;
    }
  }
  return best;
}

BonMetrics bon_metrics(std::span<const ProblemTrace> traces,
                       std::span<const PredictionSet> predictions, std::size_t num_bins) {
  if (traces.size() != predictions.size()) {
    throw ContractError("traces and predictions differ in length");
  }
  ScoredSet chosen;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const BestOfN b = best_of_n(traces[i], predictions[i]);
    const AnswerRecord& a = traces[i].answer(b.chosen);
    if (!a.label) throw PreconditionError("best-of-N needs gold answers");
    chosen.items.push_back({b.confidence, *a.label, traces[i].problem_id, b.chosen, a.tau});
  }
  BonMetrics out;
  out.problems = chosen.size();
  if (chosen.empty()) return out;
  double correct = 0.0;
  for (const auto& it : chosen.items) correct += it.y;
  out.accuracy = correct / static_cast<double>(chosen.size());
  out.ece = ece(chosen, num_bins).ece;
  out.brier = brier(chosen);
  return out;
}

std::vector<TokenBin> brier_by_token_bins(const ScoredSet& set,
                                          std::span<const std::int64_t> edges) {
  if (edges.size() < 2) throw PreconditionError("token bins need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (edges[i] <= edges[i - 1]) throw PreconditionError("token bin edges must increase");
  }
  const std::size_t nb = edges.size() - 1;
  std::vector<ScoredSet> parts(nb);
  for (const auto& it : set.items) {
    for (std::size_t b = 0; b < nb; ++b) {
      const bool last = b + 1 == nb;
      if (it.tau >= edges[b] && (it.tau < edges[b + 1] || (last && it.tau == edges[b + 1]))) {
        parts[b].items.push_back(it);
        break;
      }
    }
  }
  std::vector<TokenBin> out;
  for (std::size_t b = 0; b < nb; ++b) {
    TokenBin tb{edges[b], edges[b + 1], parts[b].size(), std::nullopt};
    if (!parts[b].empty()) tb.brier = brier(parts[b]);
    out.push_back(tb);
  }
  return out;
}

}  // namespace msv
