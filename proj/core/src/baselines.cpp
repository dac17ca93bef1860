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

#include "msv/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "msv/rng.hpp"

namespace msv {
namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_nonempty(const PredictionSet& p) {
  if (p.entries.empty()) throw ContractError("empty prediction set");
}

}  // namespace

std::vector<std::pair<std::string, ad::Tensor*>> ProbeParams::named() {
  return {{"probe.w1", &w1}, {"probe.b1", &b1}, {"probe.w2", &w2}, {"probe.b2", &b2}};
}

ProbeParams init_probe(std::size_t d, std::size_t hidden, std::uint64_t seed, double base_rate) {
  if (d == 0 || hidden == 0) throw ValidationError("probe sizes must be positive");
  CounterRng rng(seed, 0x50524F42);
  ProbeParams p;
  p.w1 = ad::Tensor(d, hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : p.w1.data()) v = s1 * rng.normal();
  p.b1 = ad::Tensor(1, hidden, 0.0);
  p.w2 = ad::Tensor(hidden, 1);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : p.w2.data()) v = s2 * rng.normal();
  const double rate = std::clamp(base_rate, 1e-4, 1.0 - 1e-4);
  p.b2 = ad::Tensor::scalar(std::log(rate / (1.0 - rate)));
  return p;
}

ad::Tensor probe_feature(const AnswerRecord& answer, Pooling pooling) {
  const std::size_t d = answer.hidden.cols(), len = answer.length();
  if (len == 0) throw DimensionError("answer has no tokens");
  ad::Tensor f(1, d);
  if (pooling == Pooling::kLastToken) {
    for (std::size_t c = 0; c < d; ++c) f(0, c) = answer.hidden(len - 1, c);
  } else {
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t c = 0; c < d; ++c) f(0, c) += answer.hidden(i, c);
    for (double& v : f.data()) v /= static_cast<double>(len);
  }
  return f;
}

ad::Var probe_logits(ad::Tape& tape, ProbeParams& params, const ad::Tensor& features) {
  ad::Var x = tape.constant(features);
  ad::Var h = ad::gelu(ad::matmul(x, tape.parameter(params.w1)) + tape.parameter(params.b1));
  return ad::matmul(h, tape.parameter(params.w2)) + tape.parameter(params.b2);
}

PredictionSet probe_predict(const ProblemTrace& trace, const ProbeParams& params,
                            Pooling pooling) {
  PredictionSet out;
  std::vector<const AnswerRecord*> answers;
  trace.for_each_answer([&](const AnswerRecord& a) { answers.push_back(&a); });
  if (answers.empty()) return out;
  if (trace.d != params.w1.rows()) throw DimensionError("probe width does not match trace d");
  ad::Tensor features(answers.size(), trace.d);
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const ad::Tensor f = probe_feature(*answers[i], pooling);
    for (std::size_t c = 0; c < trace.d; ++c) features(i, c) = f(0, c);
  }
  ad::Tape tape(ad::Tape::Mode::kInference);
  const ad::Tensor& logits =
      probe_logits(tape, const_cast<ProbeParams&>(params), features).value();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    out.entries.push_back({answers[i]->key(), answers[i]->tau, logits(i, 0), sigmoid(logits(i, 0))});
  }
  return out;
}

double token_prob_score(const AnswerRecord& answer) {
  if (!answer.logprobs || answer.logprobs->empty()) {
    throw PreconditionError("token probability score needs logprobs");
  }
  double s = 0.0;
  for (double lp : *answer.logprobs) s += lp;
  return std::exp(s / static_cast<double>(answer.logprobs->size()));
}

PredictionSet token_prob_predict(const ProblemTrace& trace) {
  PredictionSet out;
  trace.for_each_answer([&](const AnswerRecord& a) {
    const double p = token_prob_score(a);
    const double clamped = std::clamp(p, 1e-12, 1.0 - 1e-12);
    out.entries.push_back({a.key(), a.tau, std::log(clamped / (1.0 - clamped)), p});
  });
  return out;
}

PredictionSet weighted_vote(const PredictionSet& predictions, const EquivalencePartition& part,
                            Mode mode, std::size_t r) {
  check_nonempty(predictions);
  PredictionSet out;
  out.t = predictions.t;
  const auto& in = predictions.entries;
  for (const Prediction& target : in) {
    double own = 0.0, total = 0.0;
    std::size_t count = 0;
    const std::size_t cls = part.class_id(target.key);
    for (const Prediction& other : in) {
      if (mode == Mode::kStreaming && other.tau > target.tau) continue;
      ++count;
      total += other.prob;
      if (part.class_id(other.key) == cls) own += other.prob;
    }
    Prediction p = target;
    if (mode == Mode::kTerminal || count > r) {
      p.prob = total > 0.0 ? own / total : 0.0;
      const double c = std::clamp(p.prob, 1e-12, 1.0 - 1e-12);
      p.logit = std::log(c / (1.0 - c));
    }
    out.entries.push_back(p);
  }
  return out;
}

PredictionSet self_consistency(const ProblemTrace& trace, const EquivalencePartition& part,
                               Mode mode, std::size_t r, double guard_score) {
  PredictionSet out;
  std::vector<const AnswerRecord*> answers;
  trace.for_each_answer([&](const AnswerRecord& a) { answers.push_back(&a); });
  const double n_seq = static_cast<double>(trace.num_sequences());
  for (const AnswerRecord* a : answers) {
    const std::size_t cls = part.class_id(a->key());
    double score = 0.0;
    if (mode == Mode::kTerminal) {
      std::size_t agree = 0;
      for (const auto& seq : trace.sequences) {
        if (!seq.answers.empty() && part.class_id(seq.answers.back().key()) == cls) ++agree;
      }
      score = static_cast<double>(agree) / n_seq;
    } else {
      std::size_t count = 0, agree = 0;
      for (const AnswerRecord* b : answers) {
        if (b->tau > a->tau) continue;
        ++count;
        if (part.class_id(b->key()) == cls) ++agree;
      }
      score = count <= r ? guard_score
                         : static_cast<double>(agree) / static_cast<double>(count);
    }
    const double c = std::clamp(score, 1e-12, 1.0 - 1e-12);
    out.entries.push_back({a->key(), a->tau, std::log(c / (1.0 - c)), score});
  }
  return out;
}

}  // namespace msv
