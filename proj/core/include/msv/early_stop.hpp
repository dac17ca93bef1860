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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msv/msv_model.hpp"
#include "msv/trace.hpp"

namespace msv {

struct StopOutcome {
  std::string problem_id;
  std::int64_t t_star = 0;
  AnswerKey chosen;
  double confidence = 0.0;
  bool correct = false;
  bool fallback_used = false;
};

// Stops at the smallest tau where some score reaches lambda and returns the
// best-scored answer emitted by then (lowest n, then k, on ties). Without a
// hit, falls back to the best terminal answer at max tau.
// Throws ContractError on an empty trace.
StopOutcome stop(const ProblemTrace& trace, const PredictionSet& predictions, double lambda);

inline std::int64_t latency(const StopOutcome& outcome) { return outcome.t_star; }

struct CurvePoint {
  double lambda = 0.0;
  double latency = 0.0;   // mean t* in tokens
  double accuracy = 0.0;  // mean correctness
};

struct TradeoffCurve {
  std::vector<CurvePoint> points;
  double autc = 0.0;
};

// Threshold above every probability; forces the terminal fallback.
inline constexpr double kFallbackLambda = 1.0 + 1e-9;

// Every distinct score plus 0 and kFallbackLambda, ascending.
std::vector<double> default_lambda_grid(std::span<const PredictionSet> predictions);

// One point per lambda. `grid` must be ascending.
TradeoffCurve sweep(std::span<const ProblemTrace> traces,
                    std::span<const PredictionSet> predictions, std::span<const double> grid);

// Trapezoidal area of accuracy over latency on [0, budget]; the first
// accuracy is held from 0 to the first latency and the last one from the
// last latency to the budget. Throws ContractError if budget < max latency.
double autc(const TradeoffCurve& curve, double token_budget);

// "lambda,latency_tokens,accuracy" rows.
std::string curve_csv(const TradeoffCurve& curve);

}  // namespace msv
