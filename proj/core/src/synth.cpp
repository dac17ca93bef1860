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

#include "msv/synth.hpp"

#include <algorithm>
#include <cmath>

#include "msv/answer_equiv.hpp"
#include "msv/rng.hpp"

namespace msv {
namespace {

constexpr std::uint64_t kDirectionStream = 0x444952;
constexpr std::uint64_t kSplitStream = 0x53504C;

// Equivalent renderings of an integer value.
std::string render(std::size_t value, std::size_t form) {
  const std::string v = std::to_string(value);
  switch (form % 6) {
    case 0: return v;
    case 1: return "\\boxed{" + v + "}";
    case 2: return "\\frac{" + std::to_string(2 * value) + "}{2}";
    case 3: return v + ".0";
    case 4: return "(" + v + ")";
    default: return v + "+0";
  }
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must be in [0,1]");
}

}  // namespace

void GenConfig::validate() const {
  if (n_problems == 0) throw ValidationError("n_problems must be >= 1");
  if (num_sequences == 0) throw ValidationError("N must be >= 1");
  if (d == 0) throw ValidationError("d must be >= 1");
  if (min_answers == 0 || max_answers < min_answers) {
    throw ValidationError("need 1 <= min_answers <= max_answers");
  }
  if (tokens_per_answer == 0) throw ValidationError("tokens_per_answer must be >= 1");
  if (vocab_size < 2) throw ValidationError("vocab_size must be >= 2");
  check_probability(p_correct_base, "p_correct_base");
  check_probability(herding_prob, "herding_prob");
  check_probability(herding_strength, "herding_strength");
  if (difficulty_spread < 0.0) throw ValidationError("difficulty_spread must be >= 0");
  if (snr_individual < 0.0 || snr_cross < 0.0 || noise_sigma < 0.0) {
    throw ValidationError("signal and noise scales must be >= 0");
  }
  if (tau_gap_min < 1 || tau_gap_max < tau_gap_min) {
    throw ValidationError("need 1 <= tau_gap_min <= tau_gap_max");
  }
}

std::vector<double> correctness_direction(const GenConfig& config) {
  CounterRng rng(config.seed, kDirectionStream);
  std::vector<double> v(config.d);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

double correct_probability(const GenConfig& config, std::size_t k, double delta) {
  const double p = config.p_correct_base + config.p_correct_slope_in_k * static_cast<double>(k - 1) +
                   delta;
  return std::clamp(p, 0.0, 1.0);
}

std::vector<ProblemTrace> generate(const GenConfig& config) {
  config.validate();
  const std::vector<double> dir = correctness_direction(config);
  const std::size_t d = config.d;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<ProblemTrace> out;
  out.reserve(config.n_problems);
  for (std::size_t q = 0; q < config.n_problems; ++q) {
    CounterRng rng(mix_seed(config.seed, q), 0);
    ProblemTrace trace;
    trace.problem_id = "p" + std::to_string(q);
    trace.mode = config.mode;
    trace.d = d;
    const std::size_t gold = 1 + rng.uniform_int(config.vocab_size);
    trace.gold = std::to_string(gold);
    trace.prompt = "synthetic problem " + std::to_string(q);
    const double delta = config.difficulty_spread * (rng.uniform() - 0.5);
    const bool herding = rng.bernoulli(config.herding_prob);
    std::size_t dominant = 1 + rng.uniform_int(config.vocab_size - 1);
    if (dominant >= gold) ++dominant;

    // Shared nuisance: g v + r / sqrt(d).
    const double g = rng.normal();
    std::vector<double> nuisance(d);
    for (std::size_t c = 0; c < d; ++c) {
      nuisance[c] = config.snr_cross * (g * dir[c] + rng.normal() * inv_sqrt_d);
    }

    for (std::size_t n = 1; n <= config.num_sequences; ++n) {
      const std::size_t k_total =
          config.min_answers + rng.uniform_int(config.max_answers - config.min_answers + 1);
      SequenceRecord seq;
      std::int64_t tau = 0;
      for (std::size_t k = 1; k <= k_total; ++k) {
        const auto span = static_cast<std::size_t>(config.tau_gap_max - config.tau_gap_min + 1);
        tau += config.tau_gap_min + static_cast<std::int64_t>(rng.uniform_int(span));
        const bool correct = rng.bernoulli(correct_probability(config, k, delta));
        std::size_t value = gold;
        if (!correct) {
          if (herding && rng.bernoulli(config.herding_strength)) {
            value = dominant;
          } else {
            value = 1 + rng.uniform_int(config.vocab_size - 1);
            if (value >= gold) ++value;
          }
        }
        AnswerRecord a;
        a.seq_index = n;
        a.step = k;
        a.tau = tau;
        a.text = render(value, rng.uniform_int(6));
        const std::size_t len = config.tokens_per_answer;
        a.hidden = Matrix(len, d);
        const double sign = correct ? config.snr_individual : -config.snr_individual;
        std::vector<double> lp(len);
        for (std::size_t i = 0; i < len; ++i) {
          for (std::size_t c = 0; c < d; ++c) {
            const double x = sign * dir[c] + nuisance[c] + config.noise_sigma * rng.normal();
            a.hidden(i, c) = static_cast<double>(static_cast<float>(x));
          }
          const double centre = correct ? 0.2 : 0.35;
          lp[i] = static_cast<double>(static_cast<float>(-std::abs(centre + 0.15 * rng.normal())));
        }
        a.logprobs = std::move(lp);
        seq.answers.push_back(std::move(a));
      }
      if (config.mode == Mode::kTerminal) {
        AnswerRecord last = std::move(seq.answers.back());
        last.step = 1;
        seq.answers.assign(1, std::move(last));
      }
      trace.sequences.push_back(std::move(seq));
    }
    annotate(trace);
    out.push_back(std::move(trace));
  }
  return out;
}

Split split(std::vector<ProblemTrace> traces, std::array<double, 3> fractions,
            std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("split fractions must be in [0,1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split fractions must sum to 1");
  const std::size_t n = traces.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  CounterRng rng(seed, kSplitStream);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::floor(fractions[1] * static_cast<double>(n))));
  Split s;
  for (std::size_t i = 0; i < n; ++i) {
    ProblemTrace& t = traces[order[i]];
    if (i < n_train) {
      s.train.push_back(std::move(t));
    } else if (i < n_train + n_val) {
      s.val.push_back(std::move(t));
    } else {
      s.test.push_back(std::move(t));
    }
  }
  return s;
}

}  // namespace msv
