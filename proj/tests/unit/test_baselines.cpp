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
#include <vector>

#include "../support.hpp"
#include "msv/baselines.hpp"
#include "msv/error.hpp"

namespace msv {
namespace {

struct Spec {
  std::size_t n;
  std::int64_t tau;
  std::string text;
  double prob;
};

// Trace whose answers appear in the given (sequence, tau) order; steps are
// assigned per sequence.
ProblemTrace make_trace(const std::vector<Spec>& specs, Mode mode, std::size_t n_seq) {
  ProblemTrace t;
  t.problem_id = "b";
  t.mode = mode;
  t.d = 2;
  t.gold = "4";
  t.sequences.resize(n_seq);
  for (const Spec& s : specs) {
    AnswerRecord a;
    a.seq_index = s.n;
    a.step = t.sequences[s.n - 1].answers.size() + 1;
    a.tau = s.tau;
    a.text = s.text;
    a.hidden = Matrix(1, 2, 0.0);
    a.logprobs = std::vector<double>{-0.1};
    t.sequences[s.n - 1].answers.push_back(a);
  }
  annotate(t);
  return t;
}

PredictionSet with_probs(const ProblemTrace& t, const std::vector<Spec>& specs) {
  PredictionSet out;
  std::vector<std::size_t> steps(t.num_sequences(), 0);
  for (const Spec& s : specs) {
    const AnswerKey key{s.n, ++steps[s.n - 1]};
    out.entries.push_back({key, s.tau, std::log(s.prob / (1 - s.prob)), s.prob});
  }
  return out;
}

TEST(WeightedVote, TerminalExample) {
  const std::vector<Spec> specs{{1, 5, "4", 0.4}, {2, 6, "2+2", 0.3}, {3, 7, "5", 0.1}};
  const ProblemTrace t = make_trace(specs, Mode::kTerminal, 3);
  const PredictionSet wv = weighted_vote(with_probs(t, specs), partition(t), Mode::kTerminal);
  EXPECT_NEAR(wv.at({1, 1}).prob, 0.875, 1e-12);
  EXPECT_NEAR(wv.at({2, 1}).prob, 0.875, 1e-12);
  EXPECT_NEAR(wv.at({3, 1}).prob, 0.125, 1e-12);
  EXPECT_NEAR(wv.at({3, 1}).logit, std::log(0.125 / 0.875), 1e-12);
}

TEST(WeightedVote, StreamingTimeline) {
  const std::vector<Spec> specs{{1, 1, "4", 0.8}, {2, 2, "4", 0.6}, {3, 3, "5", 0.4}, {1, 4, "5", 0.2}};
  const ProblemTrace t = make_trace(specs, Mode::kStreaming, 3);
  const auto part = partition(t);
  const PredictionSet in = with_probs(t, specs);
  const PredictionSet r0 = weighted_vote(in, part, Mode::kStreaming, 0);
  EXPECT_NEAR(r0.at({1, 1}).prob, 1.0, 1e-12);
  EXPECT_NEAR(r0.at({2, 1}).prob, 1.0, 1e-12);
  EXPECT_NEAR(r0.at({3, 1}).prob, 0.4 / 1.8, 1e-12);
  EXPECT_NEAR(r0.at({1, 2}).prob, 0.6 / 2.0, 1e-12);
  const PredictionSet r2 = weighted_vote(in, part, Mode::kStreaming, 2);
  EXPECT_EQ(r2.at({1, 1}).prob, 0.8);
  EXPECT_EQ(r2.at({2, 1}).prob, 0.6);
  EXPECT_NEAR(r2.at({3, 1}).prob, 0.4 / 1.8, 1e-12);
  EXPECT_THROW(weighted_vote(PredictionSet{}, part, Mode::kStreaming), ContractError);
}

TEST(WeightedVote, SumsToOneOverClasses) {
  CounterRng rng(3, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const ProblemTrace t = testing::random_trace(rng, {.n = 5, .mode = Mode::kTerminal});
    const auto part = partition(t);
    PredictionSet in = token_prob_predict(t);
    const PredictionSet wv = weighted_vote(in, part, Mode::kTerminal);
    double total = 0.0;
    for (const auto& members : part.members) total += wv.at(members.front()).prob;
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(SelfConsistency, TerminalFractions) {
  const std::vector<Spec> specs{{1, 1, "4", 0.5}, {2, 2, "\\boxed{4}", 0.5}, {3, 3, "5", 0.5}};
  const ProblemTrace t = make_trace(specs, Mode::kTerminal, 3);
  const PredictionSet sc = self_consistency(t, partition(t), Mode::kTerminal);
  EXPECT_NEAR(sc.at({1, 1}).prob, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(sc.at({2, 1}).prob, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(sc.at({3, 1}).prob, 1.0 / 3.0, 1e-15);
}

TEST(SelfConsistency, StreamingTimelineAndGuard) {
  const std::vector<Spec> specs{{1, 1, "4", 0}, {2, 2, "4", 0}, {3, 3, "5", 0}, {1, 4, "5", 0}};
  const ProblemTrace t = make_trace(specs, Mode::kStreaming, 3);
  const auto part = partition(t);
  const PredictionSet r0 = self_consistency(t, part, Mode::kStreaming, 0);
  EXPECT_DOUBLE_EQ(r0.at({1, 1}).prob, 1.0);
  EXPECT_DOUBLE_EQ(r0.at({2, 1}).prob, 1.0);
  EXPECT_DOUBLE_EQ(r0.at({3, 1}).prob, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r0.at({1, 2}).prob, 0.5);
  const PredictionSet r2 = self_consistency(t, part, Mode::kStreaming, 2, 0.25);
  EXPECT_DOUBLE_EQ(r2.at({1, 1}).prob, 0.25);
  EXPECT_DOUBLE_EQ(r2.at({2, 1}).prob, 0.25);
  EXPECT_DOUBLE_EQ(r2.at({3, 1}).prob, 1.0 / 3.0);
}

TEST(TokenProb, GeometricMean) {
  AnswerRecord a;
  a.hidden = Matrix(3, 1, 0.0);
  a.logprobs = std::vector<double>{std::log(0.5), std::log(0.6), std::log(0.72)};
  EXPECT_NEAR(token_prob_score(a), std::cbrt(0.216), 1e-12);
  a.logprobs.reset();
  EXPECT_THROW(token_prob_score(a), PreconditionError);
}

TEST(Probe, MatchesReferenceAndPools) {
  CounterRng rng(4, 0);
  const ProblemTrace t = testing::random_trace(rng, {.l = 3, .d = 4});
  ProbeParams p = init_probe(4, 5, 1, 0.3);
  for (auto& [name, ten] : p.named())
    for (double& x : ten->data()) x = rng.normal();
  for (Pooling pool : {Pooling::kLastToken, Pooling::kMeanTokens}) {
    const PredictionSet got = probe_predict(t, p, pool);
    t.for_each_answer([&](const AnswerRecord& a) {
      std::vector<double> f(4, 0.0);
      for (std::size_t e = 0; e < 4; ++e) {
        if (pool == Pooling::kLastToken) {
          f[e] = a.hidden(2, e);
        } else {
          f[e] = (a.hidden(0, e) + a.hidden(1, e) + a.hidden(2, e)) / 3.0;
        }
      }
      double z = p.b2(0, 0);
      for (std::size_t j = 0; j < 5; ++j) {
        double h = p.b1(0, j);
        for (std::size_t e = 0; e < 4; ++e) h += f[e] * p.w1(e, j);
        z += 0.5 * h * (1.0 + std::erf(h / std::sqrt(2.0))) * p.w2(j, 0);
      }
      EXPECT_NEAR(got.at(a.key()).logit, z, 1e-12);
    });
  }
}

TEST(Probe, InitAndIndependence) {
  const ProbeParams p = init_probe(4, 6, 2, 0.2);
  EXPECT_EQ(p.w1.rows(), 4u);
  EXPECT_EQ(p.w1.cols(), 6u);
  EXPECT_NEAR(p.b2(0, 0), std::log(0.2 / 0.8), 1e-12);
  // Answers are scored alone: dropping sequences does not move the rest.
  CounterRng rng(5, 0);
  ProbeParams q = init_probe(8, 6, 2, 0.5);
  for (double& x : q.w2.data()) x = rng.normal();
  const ProblemTrace t = testing::random_trace(rng, {.n = 4});
  const PredictionSet all = probe_predict(t, q);
  const PredictionSet sub = probe_predict(select_sequences(t, {2}), q);
  for (const auto& e : sub.entries) EXPECT_EQ(e.prob, all.at({2, e.key.k}).prob);
}

}  // namespace
}  // namespace msv
