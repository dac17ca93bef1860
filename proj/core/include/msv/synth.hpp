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
#include <vector>

#include "msv/trace.hpp"

namespace msv {

struct GenConfig {
  std::size_t n_problems = 400;
  std::size_t num_sequences = 8;  // N
  std::size_t d = 16;
  Mode mode = Mode::kTerminal;
  std::size_t min_answers = 2;  // K range per sequence (streaming)
  std::size_t max_answers = 4;
  std::size_t tokens_per_answer = 2;
  std::size_t vocab_size = 8;  // candidate answer values 1..vocab_size
  double p_correct_base = 0.35;
  double p_correct_slope_in_k = 0.1;
  // Per-problem shift of the correctness rate, uniform in +-spread/2.
  double difficulty_spread = 0.4;
  // Chance that a problem has a dominant wrong value, and how often a wrong
  // answer of such a problem takes it.
  double herding_prob = 0.6;
  double herding_strength = 0.8;
  double snr_individual = 1.0;
  double snr_cross = 2.0;
  double noise_sigma = 1.0;
  std::int64_t tau_gap_min = 40;
  std::int64_t tau_gap_max = 160;
  std::uint64_t seed = 7;

  void validate() const;
  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

// Unit correctness direction v; mu_c = +snr_individual v, mu_w = -mu_c.
std::vector<double> correctness_direction(const GenConfig& config);

// P(y = 1) for step k (1-based) of a problem with difficulty shift `delta`.
double correct_probability(const GenConfig& config, std::size_t k, double delta);

// Deterministic in config (including seed). Labels are filled.
std::vector<ProblemTrace> generate(const GenConfig& config);

struct Split {
  std::vector<ProblemTrace> train, val, test;
};

// Shuffles problems, then takes floor(f_train * n) for train,
// floor(f_val * n) for val and the remainder for test.
Split split(std::vector<ProblemTrace> traces, std::array<double, 3> fractions,
            std::uint64_t seed);

}  // namespace msv
