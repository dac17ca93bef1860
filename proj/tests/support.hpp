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

// Random fixtures shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msv/msv_model.hpp"
#include "msv/rng.hpp"
#include "msv/trace.hpp"

namespace msv::testing {

struct TraceShape {
  std::size_t n = 3;
  std::size_t k_max = 2;
  std::size_t l = 2;
  std::size_t d = 8;
  Mode mode = Mode::kStreaming;
  std::size_t vocab = 3;  // distinct answer values
  bool distinct_tau = true;
};

// Valid, labelled trace with random hidden states. Answer texts mix
// equivalent spellings so classes cross sequences.
inline ProblemTrace random_trace(CounterRng& rng, const TraceShape& s,
                                 const std::string& id = "t") {
  static const char* kForms[] = {"%", "\\boxed{%}", "%.0", "(%)"};
  ProblemTrace t;
  t.problem_id = id;
  t.mode = s.mode;
  t.d = s.d;
  t.gold = "1";
  std::int64_t clock = 0;
  for (std::size_t n = 1; n <= s.n; ++n) {
    SequenceRecord seq;
    const std::size_t k_total = s.mode == Mode::kTerminal ? 1 : 1 + rng.uniform_int(s.k_max);
    std::int64_t tau = static_cast<std::int64_t>(rng.uniform_int(5));
    for (std::size_t k = 1; k <= k_total; ++k) {
      AnswerRecord a;
      a.seq_index = n;
      a.step = k;
      if (s.distinct_tau) {
        // A global clock keeps every tau distinct across sequences.
        clock += 1 + static_cast<std::int64_t>(rng.uniform_int(4));
        a.tau = clock;
      } else {
        tau += 1 + static_cast<std::int64_t>(rng.uniform_int(3));
        a.tau = tau;
      }
      std::string form = kForms[rng.uniform_int(4)];
      const std::string value = std::to_string(1 + rng.uniform_int(s.vocab));
      form.replace(form.find('%'), 1, value);
      a.text = form;
      a.hidden = Matrix(s.l, s.d);
      for (double& x : a.hidden.data()) x = rng.normal();
      a.logprobs = std::vector<double>(s.l, -0.1 - rng.uniform());
      seq.answers.push_back(std::move(a));
    }
    t.sequences.push_back(std::move(seq));
  }
  // Sequences were filled one after another, so the global clock grows with
  // n; shuffle the per-sequence offsets to interleave them.
  if (s.distinct_tau && s.mode == Mode::kStreaming) {
    std::vector<std::int64_t> all;
    for (auto& seq : t.sequences)
      for (auto& a : seq.answers) all.push_back(a.tau);
    rng.shuffle(std::span<std::int64_t>(all));
    std::size_t i = 0;
    for (auto& seq : t.sequences) {
      std::vector<std::int64_t> mine(all.begin() + static_cast<std::ptrdiff_t>(i),
                                     all.begin() + static_cast<std::ptrdiff_t>(i + seq.answers.size()));
      std::sort(mine.begin(), mine.end());
      for (std::size_t k = 0; k < seq.answers.size(); ++k) seq.answers[k].tau = mine[k];
      i += seq.answers.size();
    }
  }
  annotate(t);
  return t;
}

// Parameters with every path active: random head, mixture logits and
// gamma output layer.
inline MsvParams random_params(const MsvConfig& c, std::uint64_t seed) {
  MsvParams p = init_params(c, seed, 0.4);
  CounterRng rng(seed, 99);
  for (auto& [name, t] : p.named()) {
    if (name == "head.w" || name == "gamma.w2" || name == "attn.mix" || name == "gamma.b2" ||
        name == "block.ln.bias" || name == "block.mlp.b1" || name == "seq_embed") {
      for (double& x : t->data()) x = 0.5 * rng.normal();
    }
  }
  return p;
}

inline MsvConfig small_config(Mode mode, std::size_t d = 8, std::size_t n_max = 4) {
  MsvConfig c;
  c.d_model = d;
  c.n_heads = 2;
  c.mode = mode;
  c.n_max = n_max;
  c.logit_averaging = mode == Mode::kTerminal;
  return c;
}

}  // namespace msv::testing
