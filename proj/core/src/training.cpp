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

#include "msv/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "json_io.hpp"

namespace msv {
namespace {

constexpr std::uint64_t kEpochStream = 0x45504F;

std::vector<ad::Tensor*> all_tensors(const std::vector<ParamGroup>& groups) {
  std::vector<ad::Tensor*> out;
  for (const auto& g : groups) out.insert(out.end(), g.tensors.begin(), g.tensors.end());
  return out;
}

std::size_t count_answers(std::span<const PreparedInput> batch) {
  std::size_t n = 0;
  for (const auto& in : batch) n += in.answers.size();
  return n;
}

// Consecutive groups of at most m sequences; the evaluation-time grouping.
std::vector<PreparedInput> prepare_fixed(const MsvConfig& config,
                                         std::span<const ProblemTrace> traces, std::size_t m) {
  std::vector<PreparedInput> out;
  for (const auto& t : traces) {
    if (t.num_sequences() <= m) {
      out.push_back(prepare_input(config, t, kReadAll, partition(t)));
      continue;
    }
    for (std::size_t start = 1; start <= t.num_sequences(); start += m) {
      std::vector<std::size_t> members;
      for (std::size_t n = start; n < start + m && n <= t.num_sequences(); ++n) {
        members.push_back(n);
      }
      const ProblemTrace sub = select_sequences(t, members);
      out.push_back(prepare_input(config, sub, kReadAll, partition(sub)));
    }
  }
  return out;
}

double mean_msv_loss(const MsvConfig& config, MsvParams& params,
                     std::span<const PreparedInput> batch) {
  const std::size_t answers = count_answers(batch);
  if (answers == 0) return 0.0;
  ad::Tape tape(ad::Tape::Mode::kInference);
  BoundParams p = bind(tape, params);
  return loss(tape, config, p, batch).value().item() / static_cast<double>(answers);
}

struct ProbeData {
  ad::Tensor features;
  std::vector<double> labels;
  std::vector<std::size_t> first;  // per problem, row offset; size problems + 1
};

ProbeData probe_data(std::span<const ProblemTrace> traces, Pooling pooling) {
  ProbeData data;
  std::vector<ad::Tensor> rows;
  data.first.push_back(0);
  for (const auto& t : traces) {
    t.for_each_answer([&](const AnswerRecord& a) {
      if (!a.label) throw ContractError("probe training needs labelled answers");
      rows.push_back(probe_feature(a, pooling));
      data.labels.push_back(static_cast<double>(*a.label));
    });
    data.first.push_back(rows.size());
  }
  const std::size_t d = rows.empty() ? 0 : rows.front().cols();
  data.features = ad::Tensor(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(),
              data.features.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return data;
}

double mean_probe_loss(ProbeParams& params, const ProbeData& data) {
  if (data.labels.empty()) return 0.0;
  ad::Tape tape(ad::Tape::Mode::kInference);
  const double total =
      ad::bce_with_logits_sum(probe_logits(tape, params, data.features), data.labels)
          .value()
          .item();
  return total / static_cast<double>(data.labels.size());
}

}  // namespace

void TrainConfig::validate() const {
  for (double lr : {lr_probe, lr_body, lr_mixture, lr_seq_embed}) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("learning rates must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("Adam betas must be in [0,1)");
  }
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ValidationError("warmup_fraction must be in [0,1]");
  }
  if (!(max_grad_norm > 0.0)) throw ValidationError("max_grad_norm must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
}

AdamW::AdamW(std::vector<ParamGroup> groups, const TrainConfig& config)
    : groups_(std::move(groups)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.eps),
      wd_(config.weight_decay) {
  for (const auto& g : groups_) {
    auto& mg = m_.emplace_back();
    auto& vg = v_.emplace_back();
    for (const ad::Tensor* t : g.tensors) {
      mg.emplace_back(t->size(), 0.0);
      vg.emplace_back(t->size(), 0.0);
    }
  }
}

void AdamW::step(double lr_factor) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const double lr = groups_[gi].lr * lr_factor;
    for (std::size_t ti = 0; ti < groups_[gi].tensors.size(); ++ti) {
      ad::Tensor& p = *groups_[gi].tensors[ti];
      const auto& g = p.grad();
      auto& m = m_[gi][ti];
      auto& v = v_[gi][ti];
      auto& w = p.data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_) + wd_ * w[j];
        w[j] -= lr * update;
      }
    }
  }
}

double grad_norm(std::span<ad::Tensor* const> tensors) {
  double s = 0.0;
  for (const ad::Tensor* t : tensors)
    for (double g : t->grad()) s += g * g;
  return std::sqrt(s);
}

double clip_grad_norm(std::span<ad::Tensor* const> tensors, double max_norm) {
  const double norm = grad_norm(tensors);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (ad::Tensor* t : tensors)
      for (double& g : t->grad()) g *= scale;
  }
  return norm;
}

double warmup_factor(std::size_t step, std::size_t warmup_steps) {
  if (warmup_steps == 0) return 1.0;
  return std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

std::size_t warmup_steps(const TrainConfig& config, std::size_t total_steps) {
  return static_cast<std::size_t>(
      std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
}

std::string History::to_csv() const {
  std::string out = "epoch,step,loss,grad_norm,clipped_norm,lr_factor,lr,train_loss,val_loss\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ",,,,,,," + format_real(e.train_loss) + "," +
           (e.val_loss ? format_real(*e.val_loss) : std::string()) + "\n";
    for (const auto& s : steps) {
      if (s.epoch != e.epoch) continue;
      out += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_real(s.loss) +
             "," + format_real(s.grad_norm) + "," + format_real(s.clipped_norm) + "," +
             format_real(s.lr_factor) + "," + format_real(s.lr) + ",,\n";
    }
  }
  return out;
}

History run_training(Trainable& model, const TrainConfig& config) {
  config.validate();
  const std::vector<ad::Tensor*> tensors = all_tensors(model.groups);
  for (ad::Tensor* t : tensors) {
    t->set_requires_grad(true);
    t->zero_grad();
  }
  History history;
  std::vector<ad::Tensor> best;
  for (const ad::Tensor* t : tensors) best.push_back(*t);
  std::optional<double> best_val = model.val_loss();
  history.epochs.push_back({0, model.train_loss(), best_val});

  AdamW opt(model.groups, config);
  const double primary_lr = model.groups.empty() ? 0.0 : model.groups.front().lr;
  std::size_t step = 0, warm = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    CounterRng rng(mix_seed(config.seed, epoch), kEpochStream);
    const std::size_t n = model.epoch_begin(epoch, rng);
    const std::size_t per_epoch = (n + config.batch_size - 1) / config.batch_size;
    if (epoch == 1) warm = warmup_steps(config, per_epoch * config.epochs);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      ++step;
      for (ad::Tensor* t : tensors) t->zero_grad();
      ad::Tape tape;
      double value = 0.0;
      try {
        ad::Var l = model.batch_loss(tape, std::span(order).subspan(lo, hi - lo), rng);
        value = l.value().item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        tape.backward(l);
      } catch (const NumericError& e) {
        throw NumericError(std::string("training diverged at epoch ") + std::to_string(epoch) +
                           ", step " + std::to_string(step) + ": " + e.what());
      }
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.loss = value;
      rec.grad_norm = clip_grad_norm(tensors, config.max_grad_norm);
      rec.clipped_norm = grad_norm(tensors);
      rec.lr_factor = warmup_factor(step, warm);
      rec.lr = primary_lr * rec.lr_factor;
      opt.step(rec.lr_factor);
      for (const ad::Tensor* t : tensors) {
        for (double v : t->data()) {
          if (!std::isfinite(v)) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step) + ": non-finite parameter");
          }
        }
      }
      history.steps.push_back(rec);
    }
    const std::optional<double> val = model.val_loss();
    history.epochs.push_back({epoch, model.train_loss(), val});
    if (val && (!best_val || *val < *best_val)) {
      best_val = val;
      history.best_epoch = epoch;
      for (std::size_t i = 0; i < tensors.size(); ++i) best[i] = *tensors[i];
    } else if (!val) {
      history.best_epoch = epoch;
      for (std::size_t i = 0; i < tensors.size(); ++i) best[i] = *tensors[i];
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    *tensors[i] = best[i];
    tensors[i]->set_requires_grad(false);
  }
  return history;
}

double base_rate(std::span<const ProblemTrace> traces) {
  double pos = 0.0, total = 0.0;
  for (const auto& t : traces) {
    t.for_each_answer([&](const AnswerRecord& a) {
      if (!a.label) return;
      pos += *a.label;
      total += 1.0;
    });
  }
  return total == 0.0 ? 0.5 : pos / total;
}

MsvTrainResult train_msv(const MsvConfig& config, const TrainConfig& tc,
                         std::span<const ProblemTrace> train, std::span<const ProblemTrace> val) {
  config.validate();
  tc.validate();
  for (const auto& t : train) {
    if (t.mode != config.mode) throw ContractError("trace mode differs from the model mode");
  }
  MsvTrainResult result;
  result.params = init_params(config, tc.seed, base_rate(train));
  MsvParams& params = result.params;
  const std::size_t m = config.effective_group_size();

  Trainable model;
  ParamGroup body{"body", tc.lr_body, {}}, mixture{"mixture", tc.lr_mixture, {}},
      embed{"seq_embed", tc.lr_seq_embed, {}};
  for (auto& [name, t] : params.named()) {
    if (name == "attn.mix") {
      mixture.tensors.push_back(t);
    } else if (name == "seq_embed") {
      embed.tensors.push_back(t);
    } else {
      body.tensors.push_back(t);
    }
  }
  model.groups = {body, mixture, embed};

  bool needs_grouping = false;
  for (const auto& t : train) needs_grouping = needs_grouping || t.num_sequences() > m;
  const std::vector<PreparedInput> fixed_train = prepare_fixed(config, train, m);
  const std::vector<PreparedInput> fixed_val = prepare_fixed(config, val, m);
  std::vector<PreparedInput> examples;

  model.epoch_begin = [&](std::size_t, CounterRng& rng) -> std::size_t {
    if (!needs_grouping) {
      if (examples.empty()) examples = fixed_train;
      return examples.size();
    }
    examples.clear();
    for (const auto& t : train) {
      std::vector<std::size_t> perm(t.num_sequences());
      std::iota(perm.begin(), perm.end(), 1);
      rng.shuffle(std::span<std::size_t>(perm));
      for (std::size_t start = 0; start < perm.size(); start += m) {
        std::vector<std::size_t> members(
            perm.begin() + static_cast<std::ptrdiff_t>(start),
            perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), start + m)));
        const ProblemTrace sub = select_sequences(t, members);
        examples.push_back(prepare_input(config, sub, kReadAll, partition(sub)));
      }
    }
    return examples.size();
  };
  model.batch_loss = [&](ad::Tape& tape, std::span<const std::size_t> idx,
                         CounterRng& rng) -> ad::Var {
    std::vector<PreparedInput> batch;
    std::vector<std::vector<std::size_t>> slots;
    for (std::size_t i : idx) {
      batch.push_back(examples[i]);
      if (tc.shuffle_sequences) {
        std::vector<std::size_t> perm(config.n_max);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<std::size_t>(perm));
        std::size_t used = 0;
        for (std::size_t s : examples[i].seq_of_token) used = std::max(used, s + 1);
        perm.resize(used);
        slots.push_back(std::move(perm));
      }
    }
    BoundParams p = bind(tape, params);
    return loss(tape, config, p, batch, slots);
  };
  model.train_loss = [&]() { return mean_msv_loss(config, params, fixed_train); };
  model.val_loss = [&]() -> std::optional<double> {
    if (fixed_val.empty()) return std::nullopt;
    return mean_msv_loss(config, params, fixed_val);
  };
  result.history = run_training(model, tc);
  return result;
}

ProbeTrainResult train_probe(std::size_t d, std::size_t hidden, Pooling pooling,
                             const TrainConfig& tc, std::span<const ProblemTrace> train,
                             std::span<const ProblemTrace> val) {
  tc.validate();
  ProbeTrainResult result;
  result.params = init_probe(d, hidden, tc.seed, base_rate(train));
  ProbeParams& params = result.params;
  const ProbeData train_data = probe_data(train, pooling);
  const ProbeData val_data = probe_data(val, pooling);
  if (train_data.features.rows() > 0 && train_data.features.cols() != d) {
    throw DimensionError("probe width does not match trace d");
  }
  Trainable model;
  ParamGroup group{"probe", tc.lr_probe, {}};
  for (auto& [name, t] : params.named()) group.tensors.push_back(t);
  model.groups = {group};
  model.epoch_begin = [&](std::size_t, CounterRng&) { return train.size(); };
  model.batch_loss = [&](ad::Tape& tape, std::span<const std::size_t> idx,
                         CounterRng&) -> ad::Var {
    std::vector<std::size_t> rows;
    std::vector<double> labels;
    for (std::size_t q : idx) {
      for (std::size_t r = train_data.first[q]; r < train_data.first[q + 1]; ++r) {
        rows.push_back(r);
        labels.push_back(train_data.labels[r]);
      }
    }
    ad::Tensor features(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) features(i, c) = train_data.features(rows[i], c);
    return ad::bce_with_logits_sum(probe_logits(tape, params, features), labels);
  };
  model.train_loss = [&]() { return mean_probe_loss(params, train_data); };
  model.val_loss = [&]() -> std::optional<double> {
    if (val_data.labels.empty()) return std::nullopt;
    return mean_probe_loss(params, val_data);
  };
  result.history = run_training(model, tc);
  return result;
}

LrSelection lr_select(ModelKind kind, const MsvConfig& msv_config, std::size_t probe_hidden,
                      const TrainConfig& tc, std::span<const ProblemTrace> train,
                      std::span<const ProblemTrace> val) {
  if (tc.lr_grid.empty()) throw PreconditionError("lr grid is empty");
  if (val.empty()) throw PreconditionError("lr selection needs validation traces");
  std::vector<double> grid = tc.lr_grid;
  std::sort(grid.begin(), grid.end());
  LrSelection out;
  out.best_lr = grid.front();
  std::optional<double> best_loss;
  for (double lr : grid) {
    TrainConfig local = tc;
    double v = std::numeric_limits<double>::quiet_NaN();
    std::optional<MsvTrainResult> m;
    std::optional<ProbeTrainResult> pr;
    try {
      if (kind == ModelKind::kMsv) {
        local.lr_body = lr;
        m = train_msv(msv_config, local, train, val);
        v = *m->history.epochs[m->history.best_epoch].val_loss;
      } else {
        local.lr_probe = lr;
        pr = train_probe(train.empty() ? 0 : train.front().d, probe_hidden, msv_config.pooling,
                         local, train, val);
        v = *pr->history.epochs[pr->history.best_epoch].val_loss;
      }
    } catch (const NumericError&) {
    }
    out.val_losses.emplace_back(lr, v);
    if (std::isfinite(v) && (!best_loss || v < *best_loss)) {
      best_loss = v;
      out.best_lr = lr;
      out.msv = std::move(m);
      out.probe = std::move(pr);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::string_view to_string(VerifierKind kind) {
  switch (kind) {
    case VerifierKind::kMsv: return "msv";
    case VerifierKind::kProbe: return "probe";
    case VerifierKind::kTokenProb: return "token_prob";
    case VerifierKind::kSelfConsistency: return "self_consistency";
  }
  return "?";
}

VerifierKind parse_verifier_kind(std::string_view name) {
  for (VerifierKind k : {VerifierKind::kMsv, VerifierKind::kProbe, VerifierKind::kTokenProb,
                         VerifierKind::kSelfConsistency}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown verifier '" + std::string(name) + "'");
}

PredictionSet score(const Verifier& verifier, const ProblemTrace& trace, std::size_t r,
                    double guard_score) {
  switch (verifier.kind) {
    case VerifierKind::kMsv: {
      if (verifier.msv_config.mode != trace.mode) {
        throw ContractError("model mode " + std::string(to_string(verifier.msv_config.mode)) +
                            " does not match trace mode " + std::string(to_string(trace.mode)));
      }
      const std::size_t m = verifier.msv_config.effective_group_size();
      if (trace.num_sequences() > m) {
        return group_predict(verifier.msv_config, verifier.msv_params, trace, m);
      }
      return predict(verifier.msv_config, verifier.msv_params, trace);
    }
    case VerifierKind::kProbe:
      return probe_predict(trace, verifier.probe_params, verifier.probe_pooling);
    case VerifierKind::kTokenProb:
      return token_prob_predict(trace);
    case VerifierKind::kSelfConsistency:
      return self_consistency(trace, partition(trace), trace.mode, r, guard_score);
  }
  throw ContractError("unknown verifier kind");
}

Report evaluate(const Verifier& verifier, std::span<const ProblemTrace> traces,
                const EvalOptions& options) {
  if (traces.empty()) throw PreconditionError("evaluation needs at least one trace");
  const Mode mode = traces.front().mode;
  for (const auto& t : traces) {
    if (t.mode != mode) throw ContractError("evaluation traces mix modes");
  }
  std::vector<PredictionSet> preds(traces.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(traces.size());
  auto worker = [&]() {
    for (std::size_t i = next++; i < traces.size(); i = next++) {
      try {
        PredictionSet p = score(verifier, traces[i], options.r, options.guard_score);
        if (options.weighted_vote) {
          p = weighted_vote(p, partition(traces[i]), mode, options.r);
        }
        preds[i] = std::move(p);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, traces.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  Report rep;
  rep.verifier = verifier.name.empty() ? std::string(to_string(verifier.kind)) : verifier.name;
  rep.aggregation = options.weighted_vote ? "weighted_vote" : "none";
  rep.mode = std::string(to_string(mode));
  rep.n = traces.front().num_sequences();
  rep.problems = traces.size();
  ScoredSet set;
  for (std::size_t i = 0; i < traces.size(); ++i) append_scored(set, traces[i], preds[i]);
  rep.answers = set.size();
  rep.auroc = auroc(set);
  rep.brier = brier(set);
  rep.nll = nll(set);
  EceResult e = ece(set, options.ece_bins);
  rep.ece = e.ece;
  rep.reliability = std::move(e.bins);
  rep.bon = bon_metrics(traces, preds, options.ece_bins);
  if (!options.token_bin_edges.empty()) {
    rep.token_bins = brier_by_token_bins(set, options.token_bin_edges);
  }
  if (mode == Mode::kStreaming) {
    const std::vector<double> grid =
        options.lambda_grid.empty() ? default_lambda_grid(preds) : options.lambda_grid;
    TradeoffCurve curve = sweep(traces, preds, grid);
    double budget = 0.0;
    for (const auto& t : traces) budget = std::max(budget, static_cast<double>(t.max_tau()));
    if (options.token_budget) budget = *options.token_budget;
    curve.autc = autc(curve, budget);
    rep.curve = std::move(curve);
    rep.token_budget = budget;
  }
  return rep;
}

std::string report_to_string(const Report& r) {
  return report_to_json(r).dump(1) + "\n";
}

}  // namespace msv
