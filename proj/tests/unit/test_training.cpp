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
#include <limits>
#include <vector>

#include "../support.hpp"
#include "msv/error.hpp"
#include "msv/synth.hpp"
#include "msv/training.hpp"

namespace msv {
namespace {

std::vector<ProblemTrace> data(Mode mode, std::size_t problems, std::uint64_t seed,
                               double snr = 1.0) {
  GenConfig g;
  g.n_problems = problems;
  g.num_sequences = 4;
  g.d = 8;
  g.mode = mode;
  g.seed = seed;
  g.snr_individual = snr;
  g.snr_cross = snr;
  return generate(g);
}

MsvConfig model(Mode mode) {
  MsvConfig c = testing::small_config(mode, 8, 4);
  return c;
}

TEST(Warmup, Formula) {
  TrainConfig c;
  c.warmup_fraction = 0.03;
  EXPECT_EQ(warmup_steps(c, 100), 3u);
  EXPECT_EQ(warmup_steps(c, 101), 4u);  // ceil
  EXPECT_DOUBLE_EQ(warmup_factor(1, 3), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(warmup_factor(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(warmup_factor(7, 3), 1.0);
  EXPECT_DOUBLE_EQ(warmup_factor(1, 0), 1.0);
}

TEST(Clip, GlobalNorm) {
  ad::Tensor a(1, 2, {3.0, 0.0}), b(1, 1, 4.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  a.grad() = {3.0, 0.0};
  b.grad() = {4.0};
  ad::Tensor* ts[] = {&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ts, 1.0), 5.0);
  EXPECT_NEAR(grad_norm(ts), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ts, 2.0), grad_norm(ts));  // no-op below the cap
}

TEST(AdamW, FirstStepIsSignTimesLr) {
  ad::Tensor w(1, 2, {1.0, -1.0});
  w.set_requires_grad(true);
  w.grad() = {0.5, -2.0};
  TrainConfig c;
  c.eps = 0.0;
  AdamW opt({{"g", 0.1, {&w}}}, c);
  opt.step(1.0);
  EXPECT_NEAR(w.data()[0], 0.9, 1e-12);
  EXPECT_NEAR(w.data()[1], -0.9, 1e-12);
  // Decoupled decay shrinks parameters even without gradient.
  c.eps = 1e-8;
  c.weight_decay = 0.5;
  ad::Tensor u(1, 1, 2.0);
  u.set_requires_grad(true);
  u.grad() = {0.0};
  AdamW decay({{"g", 0.1, {&u}}}, c);
  decay.step(1.0);
  EXPECT_NEAR(u.data()[0], 2.0 * (1 - 0.1 * 0.5), 1e-12);
}

TEST(Training, ZeroEpochsAndZeroLrLeaveParamsUnchanged) {
  const auto tr = data(Mode::kTerminal, 24, 1), va = data(Mode::kTerminal, 8, 2);
  const MsvConfig c = model(Mode::kTerminal);
  TrainConfig t;
  t.epochs = 0;
  const MsvParams init = init_params(c, t.seed, base_rate(tr));
  EXPECT_TRUE(train_msv(c, t, tr, va).params == init);
  t.epochs = 2;
  t.lr_body = t.lr_mixture = t.lr_seq_embed = 0.0;
  const MsvTrainResult r = train_msv(c, t, tr, va);
  EXPECT_TRUE(r.params == init);
  EXPECT_EQ(r.history.epochs.size(), 3u);
}

TEST(Training, ConvexToyLossDecreases) {
  // Logistic regression on a separable set, full batch.
  CounterRng rng(5, 0);
  const std::size_t n = 40;
  ad::Tensor x(n, 2);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<double>(i % 2);
    x(i, 0) = (y[i] ? 1.0 : -1.0) + 0.3 * rng.normal();
    x(i, 1) = rng.normal();
  }
  ad::Tensor w(2, 1, 0.0), b(1, 1, 0.0);
  auto full_loss = [&](ad::Tape& tape) {
    return ad::bce_with_logits_sum(
        ad::add(ad::matmul(tape.constant(x), tape.parameter(w)), tape.parameter(b)), y);
  };
  Trainable m;
  m.groups = {{"head", 0.05, {&w, &b}}};
  m.epoch_begin = [&](std::size_t, CounterRng&) { return n; };
  m.batch_loss = [&](ad::Tape& tape, std::span<const std::size_t>, CounterRng&) {
    return full_loss(tape);
  };
  m.train_loss = [&] {
    ad::Tape tape(ad::Tape::Mode::kInference);
    return full_loss(tape).value().item();
  };
  m.val_loss = [] { return std::optional<double>(); };
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = n;
  c.warmup_fraction = 0.0;
  c.max_grad_norm = 1e9;
  const History h = run_training(m, c);
  ASSERT_EQ(h.epochs.size(), 31u);
  for (std::size_t e = 1; e < h.epochs.size(); ++e)
    EXPECT_LT(h.epochs[e].train_loss, h.epochs[e - 1].train_loss);
  EXPECT_EQ(h.best_epoch, 30u);
}

TEST(Training, HistoryInvariants) {
  const auto tr = data(Mode::kStreaming, 40, 3), va = data(Mode::kStreaming, 10, 4);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 8;
  t.lr_body = 1e-3;
  t.warmup_fraction = 0.2;
  const MsvTrainResult r = train_msv(model(Mode::kStreaming), t, tr, va);
  const std::size_t total = r.history.steps.size();
  EXPECT_EQ(total, 15u);
  const std::size_t warm = warmup_steps(t, total);
  EXPECT_EQ(warm, 3u);
  for (const StepRecord& s : r.history.steps) {
    EXPECT_LE(s.clipped_norm, t.max_grad_norm + 1e-9);
    EXPECT_DOUBLE_EQ(s.lr, t.lr_body * std::min(1.0, static_cast<double>(s.step) / warm));
  }
  // The kept parameters are those of the best validation epoch.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.history.epochs) best = std::min(best, *e.val_loss);
  EXPECT_EQ(*r.history.epochs[r.history.best_epoch].val_loss, best);
  const MsvConfig c = model(Mode::kStreaming);
  double v = 0.0, answers = 0.0;
  for (const auto& t2 : va) answers += static_cast<double>(t2.num_answers());
  v = loss(c, r.params, va) / answers;
  EXPECT_NEAR(v, best, 1e-9);
  const std::string csv = r.history.to_csv();
  EXPECT_EQ(csv.substr(0, 5), "epoch");
}

TEST(Training, Reproducible) {
  const auto tr = data(Mode::kTerminal, 30, 5), va = data(Mode::kTerminal, 10, 6);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 4;
  t.lr_body = 1e-3;
  const MsvConfig c = model(Mode::kTerminal);
  const MsvTrainResult a = train_msv(c, t, tr, va), b = train_msv(c, t, tr, va);
  EXPECT_TRUE(a.params == b.params);
  EXPECT_EQ(a.history.to_csv(), b.history.to_csv());
  t.seed = 1;
  EXPECT_FALSE(train_msv(c, t, tr, va).params == a.params);
}

TEST(Training, WideTracesUseGroups) {
  // 4 sequences per problem, group size 2: still trains and scores every answer.
  const auto tr = data(Mode::kTerminal, 20, 7), va = data(Mode::kTerminal, 6, 8);
  MsvConfig c = model(Mode::kTerminal);
  c.n_max = 2;
  TrainConfig t;
  t.epochs = 1;
  const MsvTrainResult r = train_msv(c, t, tr, va);
  EXPECT_EQ(r.params.seq_embed.rows(), 2u);
  Verifier v;
  v.kind = VerifierKind::kMsv;
  v.msv_config = c;
  v.msv_params = r.params;
  EXPECT_EQ(score(v, va[0], 16, 0.5).entries.size(), 4u);
}

TEST(LrSelect, SingletonDivergentAndPlanted) {
  const auto tr = data(Mode::kTerminal, 60, 9, 2.0), va = data(Mode::kTerminal, 20, 10, 2.0);
  const MsvConfig c = model(Mode::kTerminal);
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 8;
  t.lr_grid = {3e-4};
  EXPECT_EQ(lr_select(ModelKind::kProbe, c, 16, t, tr, va).best_lr, 3e-4);
  t.lr_grid = {1e300, 1e-3};
  const LrSelection div = lr_select(ModelKind::kProbe, c, 16, t, tr, va);
  EXPECT_EQ(div.best_lr, 1e-3);
  ASSERT_EQ(div.val_losses.size(), 2u);
  EXPECT_TRUE(std::isnan(div.val_losses[1].second));
  // Too small to move, the planted value, and far too large.
  t.lr_grid = {1e-7, 1e-2, 50.0};
  EXPECT_EQ(lr_select(ModelKind::kProbe, c, 16, t, tr, va).best_lr, 1e-2);
  EXPECT_THROW(lr_select(ModelKind::kProbe, c, 16, t, tr, {}), PreconditionError);
}

TEST(LrSelect, KeepsTheWinningRun) {
  const auto tr = data(Mode::kTerminal, 30, 13, 2.0), va = data(Mode::kTerminal, 10, 14, 2.0);
  const MsvConfig c = model(Mode::kTerminal);
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.lr_grid = {1e-4, 1e-3};
  const LrSelection m = lr_select(ModelKind::kMsv, c, 16, t, tr, va);
  ASSERT_TRUE(m.msv.has_value());
  EXPECT_FALSE(m.probe.has_value());
  t.lr_body = m.best_lr;
  EXPECT_EQ(m.msv->params.head_w.data(), train_msv(c, t, tr, va).params.head_w.data());
  const LrSelection p = lr_select(ModelKind::kProbe, c, 16, t, tr, va);
  ASSERT_TRUE(p.probe.has_value());
  t.lr_probe = p.best_lr;
  const auto again = train_probe(tr.front().d, 16, c.pooling, t, tr, va);
  EXPECT_EQ(p.probe->params.w2.data(), again.params.w2.data());
}

TEST(Probe, NoSignalMeansChanceAuroc) {
  const auto tr = data(Mode::kTerminal, 250, 11, 0.0), te = data(Mode::kTerminal, 250, 12, 0.0);
  TrainConfig t;
  t.epochs = 3;
  t.lr_probe = 1e-3;
  const ProbeTrainResult r = train_probe(8, 16, Pooling::kLastToken, t, tr, {});
  Verifier v;
  v.kind = VerifierKind::kProbe;
  v.probe_params = r.params;
  const Report rep = evaluate(v, te, {});
  EXPECT_EQ(rep.answers, 1000u);
  ASSERT_TRUE(rep.auroc.has_value());
  EXPECT_NEAR(*rep.auroc, 0.5, 0.05);
}

TEST(Evaluate, OracleAndConstantVerifiers) {
  const auto te = data(Mode::kTerminal, 30, 13);
  // Constant scores from a probe with a zero output layer.
  Verifier v;
  v.kind = VerifierKind::kProbe;
  v.probe_params = init_probe(8, 4, 0, 0.5);
  for (double& w : v.probe_params.w2.data()) w = 0.0;
  const Report rep = evaluate(v, te, {});
  EXPECT_DOUBLE_EQ(rep.brier, 0.25);
  double pos = 0;
  for (const auto& t : te)
    for (const auto& s : t.sequences) pos += *s.answers.back().label;
  EXPECT_NEAR(rep.ece, std::abs(0.5 - pos / static_cast<double>(rep.answers)), 1e-12);
  EXPECT_FALSE(rep.curve.has_value());
  v.kind = VerifierKind::kMsv;
  v.msv_config = model(Mode::kStreaming);
  v.msv_params = init_params(v.msv_config, 0, 0.5);
  EXPECT_THROW(evaluate(v, te, {}), ContractError);
}

TEST(Evaluate, StreamingReportHasCurveAndIsParallelSafe) {
  const auto te = data(Mode::kStreaming, 12, 14);
  Verifier v;
  v.kind = VerifierKind::kSelfConsistency;
  EvalOptions o;
  o.r = 2;
  const Report a = evaluate(v, te, o);
  o.jobs = 3;
  const Report b = evaluate(v, te, o);
  ASSERT_TRUE(a.curve.has_value());
  EXPECT_EQ(report_to_string(a), report_to_string(b));
  EXPECT_EQ(a.curve->points.front().lambda, 0.0);
}

}  // namespace
}  // namespace msv
