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

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <vector>

#include "msv/answer_equiv.hpp"
#include "msv/error.hpp"
#include "msv/synth.hpp"

namespace msv {
namespace {

GenConfig small(Mode mode, std::size_t problems = 20) {
  GenConfig c;
  c.n_problems = problems;
  c.num_sequences = 4;
  c.d = 8;
  c.mode = mode;
  return c;
}

TEST(Synth, DeterministicAndValid) {
  for (Mode mode : {Mode::kTerminal, Mode::kStreaming}) {
    const GenConfig c = small(mode);
    const auto a = generate(c), b = generate(c);
    ASSERT_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(format_trace_line(a[i]), format_trace_line(b[i]));
      EXPECT_TRUE(validate_trace(a[i]).empty());
      EXPECT_EQ(a[i].num_sequences(), 4u);
      // Stored values survive the 32-bit JSON round trip.
      const ProblemTrace back = parse_trace_line(format_trace_line(a[i]));
      for (std::size_t n = 0; n < back.sequences.size(); ++n)
        for (std::size_t k = 0; k < back.sequences[n].answers.size(); ++k)
          EXPECT_TRUE(back.sequences[n].answers[k].hidden == a[i].sequences[n].answers[k].hidden);
    }
    GenConfig other = c;
    other.seed = 8;
    EXPECT_NE(format_trace_line(generate(other)[0]), format_trace_line(a[0]));
  }
}

TEST(Synth, ProblemsIndependentOfCount) {
  // Problem q depends only on (seed, q).
  const auto few = generate(small(Mode::kStreaming, 5));
  const auto many = generate(small(Mode::kStreaming, 12));
  for (std::size_t q = 0; q < 5; ++q)
    EXPECT_EQ(format_trace_line(few[q]), format_trace_line(many[q]));
}

TEST(Synth, ValidateRejects) {
  GenConfig c;
  c.herding_prob = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = GenConfig{};
  c.max_answers = 1;
  EXPECT_THROW(c.validate(), ValidationError);
  c = GenConfig{};
  c.vocab_size = 1;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Synth, PerStepCorrectnessMatchesSchedule) {
  GenConfig c = small(Mode::kStreaming, 600);
  c.min_answers = 4;
  c.max_answers = 4;
  std::map<std::size_t, std::pair<double, double>> hits;  // k -> (correct, total)
  for (const auto& t : generate(c))
    t.for_each_answer([&](const AnswerRecord& a) {
      hits[a.step].first += *a.label;
      hits[a.step].second += 1.0;
    });
  for (const auto& [k, h] : hits) {
    // delta is symmetric and no clamp is active for these settings.
    const double p = c.p_correct_base + c.p_correct_slope_in_k * static_cast<double>(k - 1);
    const double sd = std::sqrt(p * (1 - p) / h.second);
    EXPECT_GE(h.second, 1000.0);
    EXPECT_NEAR(h.first / h.second, p, 3 * sd) << "k=" << k;
  }
}

TEST(Synth, HerdingMakesWrongMajorities) {
  GenConfig c;
  c.n_problems = 400;
  c.herding_prob = 1.0;
  c.p_correct_base = 0.25;
  std::size_t wrong = 0;
  for (const auto& t : generate(c)) {
    std::map<std::string, int> votes;
    std::map<std::string, int> label;
    for (const auto& s : t.sequences) {
      ++votes[s.answers.back().canonical];
      label[s.answers.back().canonical] = *s.answers.back().label;
    }
    auto best = votes.begin();
    for (auto it = votes.begin(); it != votes.end(); ++it)
      if (it->second > best->second) best = it;
    wrong += label[best->first] == 0;
  }
  EXPECT_GT(static_cast<double>(wrong) / 400.0, 0.40);
}

TEST(Synth, TextsAreEquivalentSpellings) {
  for (const auto& t : generate(small(Mode::kStreaming, 10)))
    t.for_each_answer([&](const AnswerRecord& a) {
      EXPECT_EQ(*a.label, equivalent(a.text, *t.gold) ? 1 : 0);
      EXPECT_EQ(a.canonical.find_first_not_of("0123456789"), std::string::npos) << a.text;
    });
}

TEST(Split, SizesAndDeterminism) {
  const auto traces = generate(small(Mode::kTerminal, 8));
  const Split s = split(traces, {0.5, 0.25, 0.25}, 3);
  EXPECT_EQ(s.train.size(), 4u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.test.size(), 2u);
  const Split again = split(traces, {0.5, 0.25, 0.25}, 3);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(s.train[i].problem_id, again.train[i].problem_id);
  std::set<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& t : *part) ids.insert(t.problem_id);
  EXPECT_EQ(ids.size(), 8u);
  EXPECT_EQ(split(traces, {1, 0, 0}, 3).train.size(), 8u);
  EXPECT_THROW(split(traces, {0.5, 0.5, 0.5}, 3), ValidationError);
}

// Brute-force Bayes classifier for the terminal, K = 1 model, using only the
// hidden states projected on the correctness direction. Per answer the token
// mean is m = +-snr + o + noise with a problem offset o shared by all
// sequences, o ~ N(0, snr_cross^2 (1 + 1/d)), and correctness depends on the
// problem's difficulty shift delta.
struct BayesBrier {
  double single = 0.0, joint = 0.0;
};

BayesBrier bayes_brier(const GenConfig& c) {
  const auto traces = generate(c);
  const std::vector<double> v = correctness_direction(c);
  const double s = c.snr_individual;
  const double var_tok = c.noise_sigma * c.noise_sigma / static_cast<double>(c.tokens_per_answer);
  const double var_o = c.snr_cross * c.snr_cross * (1.0 + 1.0 / static_cast<double>(c.d));
  auto phi = [](double x, double var) { return std::exp(-0.5 * x * x / var) / std::sqrt(var); };
  // Quadrature grids over delta (uniform) and o (Gaussian).
  std::vector<double> deltas, os, w_o;
  for (int i = 0; i < 41; ++i) deltas.push_back(c.difficulty_spread * ((i + 0.5) / 41.0 - 0.5));
  const double sd_o = std::sqrt(var_o);
  for (int i = -200; i <= 200; ++i) {
    os.push_back(sd_o * i / 25.0);
    w_o.push_back(phi(os.back(), var_o));
  }
  BayesBrier out;
  for (const auto& t : traces) {
    std::vector<double> m;
    for (const auto& seq : t.sequences) {
      const auto& a = seq.answers.front();
      double acc = 0.0;
      for (std::size_t i = 0; i < a.length(); ++i)
        for (std::size_t e = 0; e < c.d; ++e) acc += a.hidden(i, e) * v[e];
      m.push_back(acc / static_cast<double>(a.length()));
    }
    const double y = *t.sequences[0].answers.front().label;
    // Sequence 1 alone: o integrates into the noise.
    double pos1 = 0.0, neg1 = 0.0, pos = 0.0, neg = 0.0;
    for (double delta : deltas) {
      const double p = correct_probability(c, 1, delta);
      pos1 += p * phi(m[0] - s, var_tok + var_o);
      neg1 += (1 - p) * phi(m[0] + s, var_tok + var_o);
      for (std::size_t j = 0; j < os.size(); ++j) {
        const double o = os[j];
        double rest = w_o[j];
        for (std::size_t n = 1; n < m.size(); ++n)
          rest *= p * phi(m[n] - s - o, var_tok) + (1 - p) * phi(m[n] + s - o, var_tok);
        pos += rest * p * phi(m[0] - s - o, var_tok);
        neg += rest * (1 - p) * phi(m[0] + s - o, var_tok);
      }
    }
    const double q1 = pos1 / (pos1 + neg1), qn = pos / (pos + neg);
    out.single += (q1 - y) * (q1 - y) / static_cast<double>(traces.size());
    out.joint += (qn - y) * (qn - y) / static_cast<double>(traces.size());
  }
  return out;
}

TEST(Synth, CrossSequenceSignalBeatsSingleSequenceBayes) {
  for (double snr_cross : {1.0, 2.0}) {
    GenConfig c;
    c.n_problems = 1500;
    c.num_sequences = 4;
    c.min_answers = 1;
    c.max_answers = 1;
    c.snr_cross = snr_cross;
    const BayesBrier b = bayes_brier(c);
    EXPECT_GT(b.single, b.joint + 0.01) << "snr_cross=" << snr_cross;
    EXPECT_LT(b.single, 0.25);
  }
}

}  // namespace
}  // namespace msv
