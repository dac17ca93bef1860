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

#include "msv/early_stop.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json_io.hpp"

namespace msv {
namespace {

bool correct_label(const ProblemTrace& trace, AnswerKey key) {
  const AnswerRecord& a = trace.answer(key);
  if (!a.label) throw PreconditionError("early stopping needs labelled answers");
  return *a.label == 1;
}

}  // namespace

StopOutcome stop(const ProblemTrace& trace, const PredictionSet& predictions, double lambda) {
  if (trace.num_answers() == 0) throw ContractError("early stopping on an empty trace");
  StopOutcome out;
  out.problem_id = trace.problem_id;

  struct Scored {
    AnswerKey key;
    std::int64_t tau;
    double p;
  };
  std::vector<Scored> all;
  trace.for_each_answer([&](const AnswerRecord& a) {
    const auto p = predictions.prob(a.key());
    if (!p) {
      throw PreconditionError("no score for answer (" + std::to_string(a.seq_index) + "," +
                              std::to_string(a.step) + ")");
    }
    all.push_back({a.key(), a.tau, *p});
  });

  std::optional<std::int64_t> hit;
  for (const auto& s : all) {
    if (s.p >= lambda && (!hit || s.tau < *hit)) hit = s.tau;
  }
  if (hit) {
    const Scored* best = nullptr;
    for (const auto& s : all) {
      if (s.tau > *hit) continue;
      if (!best || s.p > best->p || (s.p == best->p && s.key < best->key)) best = &s;
    }
    out.t_star = *hit;
    out.chosen = best->key;
    out.confidence = best->p;
  } else {
    const Scored* best = nullptr;
    for (std::size_t n = 1; n <= trace.num_sequences(); ++n) {
      const AnswerKey key = trace.terminal(n).key();
      for (const auto& s : all) {
        if (s.key == key && (!best || s.p > best->p)) best = &s;
      }
    }
    out.t_star = trace.max_tau();
    out.chosen = best->key;
    out.confidence = best->p;
    out.fallback_used = true;
  }
  out.correct = correct_label(trace, out.chosen);
  return out;
}

std::vector<double> default_lambda_grid(std::span<const PredictionSet> predictions) {
  std::set<double> grid{0.0, kFallbackLambda};
  for (const auto& ps : predictions)
    for (const auto& e : ps.entries) grid.insert(e.prob);
  return {grid.begin(), grid.end()};
}

TradeoffCurve sweep(std::span<const ProblemTrace> traces,
                    std::span<const PredictionSet> predictions, std::span<const double> grid) {
  if (traces.size() != predictions.size()) {
    throw ContractError("traces and predictions differ in length");
  }
  if (!std::is_sorted(grid.begin(), grid.end())) throw PreconditionError("lambda grid must ascend");
  TradeoffCurve curve;
  if (traces.empty()) return curve;
  const double m = static_cast<double>(traces.size());
  for (double lambda : grid) {
    double lat = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const StopOutcome o = stop(traces[i], predictions[i], lambda);
      lat += static_cast<double>(o.t_star);
      acc += o.correct ? 1.0 : 0.0;
    }
    curve.points.push_back({lambda, lat / m, acc / m});
  }
  return curve;
}

double autc(const TradeoffCurve& curve, double token_budget) {
  if (curve.points.empty()) return 0.0;
  const auto& pts = curve.points;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].latency < pts[i - 1].latency) {
      throw PreconditionError("curve latencies must be nondecreasing");
    }
  }
  if (token_budget < pts.back().latency) {
    throw ContractError("token budget is below the largest latency");
  }
  double area = pts.front().accuracy * pts.front().latency;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].accuracy + pts[i - 1].accuracy) * (pts[i].latency - pts[i - 1].latency);
  }
  area += pts.back().accuracy * (token_budget - pts.back().latency);
  return area;
}

std::string curve_csv(const TradeoffCurve& curve) {
  std::string out = "lambda,latency_tokens,accuracy\n";
  for (const auto& p : curve.points) {
    out += format_real(p.lambda) + "," + format_real(p.latency) + "," + format_real(p.accuracy) +
           "\n";
  }
  return out;
}

}  // namespace msv
