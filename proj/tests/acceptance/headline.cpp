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

#include "headline.hpp"

namespace msv::acceptance {

Headline herding_terminal() {
  Headline h;
  h.gen.n_problems = h.train_problems + h.val_problems + h.test_problems;
  h.gen.num_sequences = 8;
  h.gen.d = 16;
  h.gen.mode = Mode::kTerminal;
  h.gen.seed = 7;
  h.gen.snr_cross = 1.0;
  h.train.epochs = 40;
  h.train.batch_size = 16;
  h.msv.d_model = h.gen.d;
  h.msv.mode = Mode::kTerminal;
  h.msv.logit_averaging = true;
  return h;
}

Headline herding_streaming() {
  Headline h = herding_terminal();
  h.gen.mode = Mode::kStreaming;
  h.msv.mode = Mode::kStreaming;
  h.msv.logit_averaging = false;
  return h;
}

Data make_data(const Headline& h) {
  std::vector<ProblemTrace> all = generate(h.gen);
  Data d;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i < h.train_problems) {
      d.train.push_back(std::move(all[i]));
    } else if (i < h.train_problems + h.val_problems) {
      d.val.push_back(std::move(all[i]));
    } else {
      d.test.push_back(std::move(all[i]));
    }
  }
  return d;
}

Verifier train_verifier(const Headline& h, const Data& data, VerifierKind kind, std::size_t n_max,
                        std::uint64_t seed, double* chosen_lr) {
  TrainConfig tc = h.train;
  tc.seed = seed;
  MsvConfig mc = h.msv;
  mc.n_max = n_max;
  Verifier v;
  v.kind = kind;
  const ModelKind mk = kind == VerifierKind::kMsv ? ModelKind::kMsv : ModelKind::kProbe;
  double lr = mk == ModelKind::kMsv ? tc.lr_body : tc.lr_probe;
  std::optional<LrSelection> sel;
  if (h.select_lr) {
    sel = lr_select(mk, mc, h.probe_hidden, tc, data.train, data.val);
    lr = sel->best_lr;
    (mk == ModelKind::kMsv ? tc.lr_body : tc.lr_probe) = lr;
  }
  if (chosen_lr) *chosen_lr = lr;
  // The selected run is reused; retraining at the chosen lr would give the same result.
  if (mk == ModelKind::kMsv) {
    v.msv_config = mc;
    v.msv_params = sel && sel->msv ? sel->msv->params : train_msv(mc, tc, data.train, data.val).params;
  } else {
    v.probe_params = sel && sel->probe
                         ? sel->probe->params
                         : train_probe(h.gen.d, h.probe_hidden, mc.pooling, tc, data.train, data.val).params;
  }
  return v;
}

Scores score_verifier(const Verifier& v, const Data& data, bool weighted_vote) {
  EvalOptions opts;
  opts.weighted_vote = weighted_vote;
  const Report r = evaluate(v, data.test, opts);
  Scores s;
  s.brier = r.brier;
  s.bon_accuracy = r.bon.accuracy;
  if (r.curve) s.autc = r.curve->autc;
  return s;
}

}  // namespace msv::acceptance
