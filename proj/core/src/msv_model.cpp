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

#include "msv/msv_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json_io.hpp"
#include "msv/rng.hpp"

namespace msv {
namespace {

using ad::Tape;
using ad::Tensor;
using ad::Var;

Tensor normal_tensor(CounterRng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y (1 x cols) = x (1 x rows) * w (rows x cols)
std::vector<double> row_times(std::span<const double> x, const Tensor& w) {
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t j = 0; j < w.cols(); ++j) y[j] += x[i] * w(i, j);
  }
  return y;
}

void add_row(std::vector<double>& y, const Tensor& bias) {
  for (std::size_t j = 0; j < y.size(); ++j) y[j] += bias(0, j);
}

}  // namespace

std::string_view to_string(Pooling p) {
  return p == Pooling::kLastToken ? "last_token" : "mean_tokens";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "last_token") return Pooling::kLastToken;
  if (name == "mean_tokens") return Pooling::kMeanTokens;
  throw ValidationError("unknown pooling '" + std::string(name) + "'");
}

std::vector<MaskKind> MsvConfig::effective_masks() const {
  std::vector<MaskKind> out;
  for (MaskKind k : masks) {
    if (std::find(out.begin(), out.end(), k) != out.end()) continue;
    if (mode == Mode::kTerminal &&
        (k == MaskKind::kWithinSequence || k == MaskKind::kWithinAnswer)) {
      const MaskKind twin =
          k == MaskKind::kWithinSequence ? MaskKind::kWithinAnswer : MaskKind::kWithinSequence;
      if (std::find(out.begin(), out.end(), twin) != out.end()) continue;
    }
    out.push_back(k);
  }
  return out;
}

void MsvConfig::validate() const {
  if (d_model == 0) throw ValidationError("d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ValidationError("n_heads must divide d_model");
  }
  if (masks.empty()) throw ValidationError("at least one mask kind must be enabled");
  if (n_max == 0) throw ValidationError("n_max must be >= 1");
  if (logit_averaging && mode != Mode::kTerminal) {
    throw ValidationError("logit_averaging requires terminal mode");
  }
  if (streaming_logit_averaging && mode != Mode::kStreaming) {
    throw ValidationError("streaming_logit_averaging requires streaming mode");
  }
  if (group_size > n_max) throw ValidationError("group_size must not exceed n_max");
}

std::vector<std::pair<std::string, Tensor*>> MsvParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("seq_embed", &seq_embed);
  for (std::size_t h = 0; h < w_q.size(); ++h) {
    const std::string s = std::to_string(h);
    out.emplace_back("attn.q." + s, &w_q[h]);
    out.emplace_back("attn.k." + s, &w_k[h]);
    out.emplace_back("attn.v." + s, &w_v[h]);
    out.emplace_back("attn.o." + s, &w_o[h]);
  }
  out.emplace_back("attn.mix", &mix_logits);
  out.emplace_back("block.ln.gain", &ln_gain);
  out.emplace_back("block.ln.bias", &ln_bias);
  out.emplace_back("block.mlp.w1", &mlp_w1);
  out.emplace_back("block.mlp.b1", &mlp_b1);
  out.emplace_back("block.mlp.w2", &mlp_w2);
  out.emplace_back("block.mlp.b2", &mlp_b2);
  out.emplace_back("gamma.w1", &gamma_w1);
  out.emplace_back("gamma.b1", &gamma_b1);
  out.emplace_back("gamma.w2", &gamma_w2);
  out.emplace_back("gamma.b2", &gamma_b2);
  out.emplace_back("head.w", &head_w);
  out.emplace_back("head.b", &head_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MsvParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<MsvParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

MsvParams init_params(const MsvConfig& config, std::uint64_t seed, double base_rate) {
  config.validate();
  const std::size_t d = config.d_model, dh = config.d_head(), hid = config.mlp_hidden();
  const std::size_t j = config.effective_masks().size();
  CounterRng rng(seed, 0x4D5356);
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  MsvParams p;
  p.seq_embed = normal_tensor(rng, config.n_max, d, 0.02);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    p.w_q.push_back(normal_tensor(rng, d, dh, proj));
    p.w_k.push_back(normal_tensor(rng, d, dh, proj));
    p.w_v.push_back(normal_tensor(rng, d, dh, proj));
    p.w_o.push_back(normal_tensor(rng, dh, d, proj));
  }
  p.mix_logits = Tensor(config.n_heads, j, 0.0);
  p.ln_gain = Tensor(1, d, 1.0);
  p.ln_bias = Tensor(1, d, 0.0);
  p.mlp_w1 = normal_tensor(rng, d, hid, proj);
  p.mlp_b1 = Tensor(1, hid, 0.0);
  p.mlp_w2 = normal_tensor(rng, hid, d, 1.0 / std::sqrt(static_cast<double>(hid)));
  p.mlp_b2 = Tensor(1, d, 0.0);
  p.gamma_w1 = normal_tensor(rng, 1, d, 1.0);
  p.gamma_b1 = Tensor(1, d, 0.0);
  p.gamma_w2 = Tensor(d, d, 0.0);
  p.gamma_b2 = Tensor(1, d, 0.0);
  p.head_w = Tensor(d, 1, 0.0);
  const double rate = std::clamp(base_rate, 1e-4, 1.0 - 1e-4);
  p.head_b = Tensor::scalar(std::log(rate / (1.0 - rate)));
  return p;
}

const Prediction& PredictionSet::at(AnswerKey key) const {
  for (const auto& e : entries)
    if (e.key == key) return e;
  throw LookupError("no prediction for (" + std::to_string(key.n) + "," +
                    std::to_string(key.k) + ")");
}

std::optional<double> PredictionSet::prob(AnswerKey key) const {
  for (const auto& e : entries)
    if (e.key == key) return e.prob;
  return std::nullopt;
}

AssembledInput assemble_input(const MsvConfig& config, const MsvParams& params,
                              const ProblemTrace& trace, std::int64_t t,
                              const EquivalencePartition& part) {
  AssembledInput out;
  out.tokens = build_token_index(trace, t, part);
  if (out.tokens.empty()) throw PreconditionError("no answers with tau <= t");
  if (trace.d != config.d_model) {
    throw DimensionError("trace d=" + std::to_string(trace.d) + " but d_model=" +
                         std::to_string(config.d_model));
  }
  out.u = Matrix(out.tokens.size(), trace.d);
  std::size_t row = 0;
  for (const auto& seq : trace.sequences) {
    for (const auto& a : seq.answers) {
      if (a.tau > t) continue;
      if (a.seq_index > config.n_max || a.seq_index > params.seq_embed.rows()) {
        throw CapacityError("sequence " + std::to_string(a.seq_index) + " exceeds n_max=" +
                            std::to_string(config.n_max));
      }
      for (std::size_t i = 0; i < a.length(); ++i, ++row) {
        for (std::size_t c = 0; c < trace.d; ++c) {
          out.u(row, c) = a.hidden(i, c) + params.seq_embed(a.seq_index - 1, c);
        }
      }
    }
  }
  return out;
}

PreparedInput prepare_input(const MsvConfig& config, const ProblemTrace& trace, std::int64_t t,
                            const EquivalencePartition& part) {
  if (trace.d != config.d_model) {
    throw DimensionError("trace d=" + std::to_string(trace.d) + " but d_model=" +
                         std::to_string(config.d_model));
  }
  PreparedInput in;
  in.tokens = build_token_index(trace, t, part);
  const std::size_t n_tok = in.tokens.size();
  in.hidden = Tensor(n_tok, trace.d);
  std::vector<const AnswerRecord*> included;
  std::size_t row = 0;
  for (const auto& seq : trace.sequences) {
    for (const auto& a : seq.answers) {
      if (a.tau > t) continue;
      if (a.seq_index > config.n_max) {
        throw CapacityError("sequence " + std::to_string(a.seq_index) + " exceeds n_max=" +
                            std::to_string(config.n_max));
      }
      included.push_back(&a);
      for (std::size_t i = 0; i < a.length(); ++i, ++row) {
        std::copy(a.hidden.row(i).begin(), a.hidden.row(i).end(),
                  in.hidden.data().begin() + static_cast<std::ptrdiff_t>(row * trace.d));
        in.seq_of_token.push_back(a.seq_index - 1);
      }
    }
  }
  in.masks = build_masks(in.tokens, config.effective_masks(), config.mode);

  const std::size_t n_ans = included.size();
  in.pool = Tensor(n_ans, n_tok);
  in.gamma = Tensor(n_ans, 1);
  bool all_labelled = n_ans > 0;
  std::size_t first = 0;
  for (std::size_t a = 0; a < n_ans; ++a) {
    const AnswerRecord& rec = *included[a];
    in.answers.push_back(rec.key());
    in.taus.push_back(rec.tau);
    const std::size_t len = rec.length();
    if (config.pooling == Pooling::kLastToken) {
      in.pool(a, first + len - 1) = 1.0;
    } else {
      for (std::size_t i = 0; i < len; ++i) in.pool(a, first + i) = 1.0 / static_cast<double>(len);
    }
    first += len;
    in.gamma(a, 0) = vote_fraction(trace, rec.key(), part);
    if (rec.label) {
      in.labels.push_back(static_cast<double>(*rec.label));
    } else {
      all_labelled = false;
    }
  }
  if (!all_labelled) in.labels.clear();

  const bool terminal_avg = config.mode == Mode::kTerminal && config.logit_averaging;
  const bool streaming_avg = config.mode == Mode::kStreaming && config.streaming_logit_averaging;
  if (terminal_avg || streaming_avg) {
    in.averaging = Tensor(n_ans, n_ans);
    for (std::size_t i = 0; i < n_ans; ++i) {
      const std::size_t ci = part.class_id(in.answers[i]);
      std::vector<std::size_t> members;
      for (std::size_t j = 0; j < n_ans; ++j) {
        if (part.class_id(in.answers[j]) != ci) continue;
        if (streaming_avg && in.taus[j] > in.taus[i]) continue;
        members.push_back(j);
      }
      for (std::size_t j : members) in.averaging(i, j) = 1.0 / static_cast<double>(members.size());
    }
  }
  return in;
}

BoundParams bind(Tape& tape, MsvParams& params) {
  BoundParams b;
  b.seq_embed = tape.parameter(params.seq_embed);
  for (std::size_t h = 0; h < params.w_q.size(); ++h) {
    b.w_q.push_back(tape.parameter(params.w_q[h]));
    b.w_k.push_back(tape.parameter(params.w_k[h]));
    b.w_v.push_back(tape.parameter(params.w_v[h]));
    b.w_o.push_back(tape.parameter(params.w_o[h]));
  }
  b.mix_logits = tape.parameter(params.mix_logits);
  b.ln_gain = tape.parameter(params.ln_gain);
  b.ln_bias = tape.parameter(params.ln_bias);
  b.mlp_w1 = tape.parameter(params.mlp_w1);
  b.mlp_b1 = tape.parameter(params.mlp_b1);
  b.mlp_w2 = tape.parameter(params.mlp_w2);
  b.mlp_b2 = tape.parameter(params.mlp_b2);
  b.gamma_w1 = tape.parameter(params.gamma_w1);
  b.gamma_b1 = tape.parameter(params.gamma_b1);
  b.gamma_w2 = tape.parameter(params.gamma_w2);
  b.gamma_b2 = tape.parameter(params.gamma_b2);
  b.head_w = tape.parameter(params.head_w);
  b.head_b = tape.parameter(params.head_b);
  return b;
}

Var mmtb_forward(const MsvConfig& config, const BoundParams& p, Var u, const MaskSet& masks) {
  Tape& tape = *u.tape;
  if (masks.num_tokens() != u.rows()) {
    throw DimensionError("mask set covers " + std::to_string(masks.num_tokens()) +
                         " tokens but U has " + std::to_string(u.rows()) + " rows");
  }
  if (masks.num_masks() != p.mix_logits.cols()) {
    throw DimensionError("mask set has " + std::to_string(masks.num_masks()) +
                         " masks but mixture weights have " +
                         std::to_string(p.mix_logits.cols()));
  }
  if (u.cols() != config.d_model) throw DimensionError("U width does not match d_model");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(config.d_head()));
  std::optional<Var> mixed;
  for (std::size_t h = 0; h < p.w_q.size(); ++h) {
    Var q = ad::matmul(u, p.w_q[h]);
    Var k = ad::matmul(u, p.w_k[h]);
    Var v = ad::matmul(u, p.w_v[h]);
    Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
    std::vector<Var> weights;
    for (std::size_t j = 0; j < masks.num_masks(); ++j) {
      weights.push_back(ad::row_softmax_with_additive_mask(scores, masks.additive(j)));
    }
    const std::size_t row = h;
    Var alpha = ad::row_softmax(ad::gather_rows(p.mix_logits, std::span(&row, 1)));
    Var combined = ad::weighted_sum(weights, alpha);
    Var head = ad::matmul(ad::matmul(combined, v), p.w_o[h]);
    mixed = mixed ? ad::add(*mixed, head) : head;
  }
  Var x = ad::add(u, *mixed);
  Var hidden = ad::gelu(ad::add(ad::matmul(ad::layer_norm(x, p.ln_gain, p.ln_bias), p.mlp_w1),
                                p.mlp_b1));
  Var mlp = ad::add(ad::matmul(hidden, p.mlp_w2), p.mlp_b2);
  (void)tape;
  return ad::add(x, mlp);
}

Matrix mmtb_forward(const MsvConfig& config, const MsvParams& params, const Matrix& u,
                    const MaskSet& masks) {
  Tape tape(Tape::Mode::kInference);
  BoundParams p = bind(tape, const_cast<MsvParams&>(params));
  Var z = mmtb_forward(config, p, tape.constant(u), masks);
  const Tensor& zv = z.value();
  return Matrix(zv.rows(), zv.cols(), zv.data());
}

Var forward_logits(const MsvConfig& config, const BoundParams& p, const PreparedInput& in,
                   std::span<const std::size_t> slots) {
  Tape& tape = *p.seq_embed.tape;
  if (in.answers.empty()) throw PreconditionError("no answers to score");
  std::vector<std::size_t> rows = in.seq_of_token;
  if (!slots.empty()) {
    for (auto& r : rows) {
      if (r >= slots.size()) throw CapacityError("no embedding slot for sequence");
      r = slots[r];
    }
  }
  for (std::size_t r : rows) {
    if (r >= p.seq_embed.rows()) throw CapacityError("embedding slot exceeds n_max");
  }
  Var u = ad::add(tape.constant(in.hidden), ad::gather_rows(p.seq_embed, rows));
  Var z = mmtb_forward(config, p, u, in.masks);
  Var pooled = ad::matmul(tape.constant(in.pool), z);
  if (config.feature_augmentation) {
    Var g = ad::gelu(ad::add(ad::matmul(tape.constant(in.gamma), p.gamma_w1), p.gamma_b1));
    pooled = ad::add(pooled, ad::add(ad::matmul(g, p.gamma_w2), p.gamma_b2));
  }
  Var logits = ad::add(ad::matmul(pooled, p.head_w), p.head_b);
  if (in.averaging.size() > 0) logits = ad::matmul(tape.constant(in.averaging), logits);
  return logits;
}

PredictionSet predict(const MsvConfig& config, const MsvParams& params, const ProblemTrace& trace,
                      std::int64_t t, const EquivalencePartition& part) {
  PredictionSet out;
  out.t = t;
  PreparedInput in = prepare_input(config, trace, t, part);
  if (in.answers.empty()) return out;
  Tape tape(Tape::Mode::kInference);
  BoundParams p = bind(tape, const_cast<MsvParams&>(params));
  const Tensor& logits = forward_logits(config, p, in).value();
  for (std::size_t a = 0; a < in.answers.size(); ++a) {
    const double z = logits(a, 0);
    out.entries.push_back({in.answers[a], in.taus[a], z, sigmoid_scalar(z)});
  }
  return out;
}

PredictionSet predict(const MsvConfig& config, const MsvParams& params, const ProblemTrace& trace) {
  return predict(config, params, trace, kReadAll, partition(trace));
}

Var loss(Tape& tape, const MsvConfig& config, const BoundParams& p,
         std::span<const PreparedInput> batch, std::span<const std::vector<std::size_t>> slots) {
  std::optional<Var> total;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PreparedInput& in = batch[b];
    if (in.answers.empty()) continue;
    if (in.labels.size() != in.answers.size()) {
      throw ContractError("loss requires every answer to be labelled");
    }
    std::span<const std::size_t> s;
    if (!slots.empty()) s = slots[b];
    Var term = ad::bce_with_logits_sum(forward_logits(config, p, in, s), in.labels);
    total = total ? ad::add(*total, term) : term;
  }
  return total ? *total : tape.constant(Tensor::scalar(0.0));
}

double loss(const MsvConfig& config, const MsvParams& params, std::span<const ProblemTrace> traces) {
  std::vector<PreparedInput> batch;
  for (const auto& t : traces) batch.push_back(prepare_input(config, t, kReadAll, partition(t)));
  Tape tape(Tape::Mode::kInference);
  BoundParams p = bind(tape, const_cast<MsvParams&>(params));
  return loss(tape, config, p, batch).value().item();
}

PredictionSet group_predict(const MsvConfig& config, const MsvParams& params,
                            const ProblemTrace& trace, std::size_t group_size) {
  if (group_size == 0) throw PreconditionError("group size must be >= 1");
  if (group_size > config.n_max) throw CapacityError("group size exceeds n_max");
  PredictionSet out;
  const std::size_t n_seq = trace.num_sequences();
  for (std::size_t start = 1; start <= n_seq; start += group_size) {
    std::vector<std::size_t> members;
    for (std::size_t n = start; n < start + group_size && n <= n_seq; ++n) members.push_back(n);
    const ProblemTrace sub = select_sequences(trace, members);
    PredictionSet local = predict(config, params, sub, kReadAll, partition(sub));
    for (Prediction pr : local.entries) {
      pr.key.n = members[pr.key.n - 1];
      out.entries.push_back(pr);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// IncrementalSession

IncrementalSession::IncrementalSession(MsvConfig config, const MsvParams& params,
                                       std::size_t num_sequences)
    : config_(std::move(config)),
      params_(params),
      num_sequences_(num_sequences),
      keys_(config_.n_heads),
      values_(config_.n_heads),
      latest_class_(num_sequences),
      last_step_(num_sequences, 0) {
  config_.validate();
  if (config_.mode != Mode::kStreaming) {
    throw PreconditionError("incremental scoring requires streaming mode");
  }
  if (num_sequences == 0 || num_sequences > config_.n_max) {
    throw CapacityError("session needs 1 <= N <= n_max sequences");
  }
  Tape tape(Tape::Mode::kInference);
  Var mix = tape.constant(params_.mix_logits);
  for (std::size_t h = 0; h < config_.n_heads; ++h) {
    const std::size_t row = h;
    alpha_.push_back(ad::row_softmax(ad::gather_rows(mix, std::span(&row, 1))).value());
  }
}

double IncrementalSession::score(std::size_t first, std::size_t len, std::size_t cls) const {
  const std::size_t d = config_.d_model, dh = config_.d_head();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const std::vector<MaskKind> kinds = config_.effective_masks();
  const std::size_t total = tokens_.size();

  std::vector<std::size_t> queries;
  if (config_.pooling == Pooling::kLastToken) {
    queries.push_back(len - 1);
  } else {
    for (std::size_t i = 0; i < len; ++i) queries.push_back(i);
  }

  std::vector<double> pooled(d, 0.0);
  for (std::size_t qi : queries) {
    const TokenIndex& me = tokens_[first + qi];
    std::vector<double> x = rows_[first + qi];
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const auto q = row_times(rows_[first + qi], params_.w_q[h]);
      std::vector<double> scores(total);
      for (std::size_t c = 0; c < total; ++c) {
        double s = 0.0;
        for (std::size_t e = 0; e < dh; ++e) s += q[e] * keys_[h][c * dh + e];
        scores[c] = s * inv_sqrt;
      }
      std::vector<double> mixw(total, 0.0);
      for (std::size_t j = 0; j < kinds.size(); ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < total; ++c)
          if (allowed(me, tokens_[c], kinds[j], Mode::kStreaming)) mx = std::max(mx, scores[c]);
        if (mx == -std::numeric_limits<double>::infinity()) continue;
        std::vector<double> w(total, 0.0);
        double denom = 0.0;
        for (std::size_t c = 0; c < total; ++c) {
          if (!allowed(me, tokens_[c], kinds[j], Mode::kStreaming)) continue;
          w[c] = std::exp(scores[c] - mx);
          denom += w[c];
        }
        const double a = alpha_[h](0, j);
        for (std::size_t c = 0; c < total; ++c) mixw[c] += a * (w[c] / denom);
      }
      std::vector<double> attended(dh, 0.0);
      for (std::size_t c = 0; c < total; ++c) {
        if (mixw[c] == 0.0) continue;
        for (std::size_t e = 0; e < dh; ++e) attended[e] += mixw[c] * values_[h][c * dh + e];
      }
      const auto projected = row_times(attended, params_.w_o[h]);
      for (std::size_t c = 0; c < d; ++c) x[c] += projected[c];
    }
    // Z = X + MLP(LN(X))
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> normed(d);
    for (std::size_t c = 0; c < d; ++c) {
      normed[c] = (x[c] - mean) * inv_std * params_.ln_gain(0, c) + params_.ln_bias(0, c);
    }
    auto hidden = row_times(normed, params_.mlp_w1);
    add_row(hidden, params_.mlp_b1);
    for (double& v : hidden) v = gelu_scalar(v);
    auto mlp = row_times(hidden, params_.mlp_w2);
    add_row(mlp, params_.mlp_b2);
    const double w = 1.0 / static_cast<double>(queries.size());
    for (std::size_t c = 0; c < d; ++c) pooled[c] += w * (x[c] + mlp[c]);
  }

  if (config_.feature_augmentation) {
    std::size_t agree = 0;
    for (const auto& lc : latest_class_)
      if (lc && *lc == cls) ++agree;
    const double gamma = static_cast<double>(agree) / static_cast<double>(num_sequences_);
    std::vector<double> g(d);
    for (std::size_t c = 0; c < d; ++c) {
      g[c] = gelu_scalar(gamma * params_.gamma_w1(0, c) + params_.gamma_b1(0, c));
    }
    auto f = row_times(g, params_.gamma_w2);
    add_row(f, params_.gamma_b2);
    for (std::size_t c = 0; c < d; ++c) pooled[c] += f[c];
  }
  double logit = params_.head_b(0, 0);
  for (std::size_t c = 0; c < d; ++c) logit += pooled[c] * params_.head_w(c, 0);
  return logit;
}

Prediction IncrementalSession::add(const AnswerRecord& answer) {
  if (answer.tau < last_tau_) {
    throw OrderingError("answer tau " + std::to_string(answer.tau) + " precedes " +
                        std::to_string(last_tau_));
  }
  const std::size_t n = answer.seq_index;
  if (n == 0 || n > num_sequences_) throw LookupError("sequence index out of range");
  if (answer.hidden.cols() != config_.d_model || answer.length() == 0) {
    throw DimensionError("answer hidden states do not match d_model");
  }
  last_tau_ = answer.tau;
  last_step_[n - 1] = answer.step;

  auto [it, inserted] = classes_.emplace(canonicalize(answer.text), classes_.size());
  const std::size_t cls = it->second;
  latest_class_[n - 1] = cls;

  const std::size_t d = config_.d_model, len = answer.length();
  const std::size_t first = tokens_.size();
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> row(d);
    for (std::size_t c = 0; c < d; ++c) row[c] = answer.hidden(i, c) + params_.seq_embed(n - 1, c);
    tokens_.push_back({first + i, n, answer.step, cls, answer.tau});
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const auto k = row_times(row, params_.w_k[h]);
      const auto v = row_times(row, params_.w_v[h]);
      keys_[h].insert(keys_[h].end(), k.begin(), k.end());
      values_[h].insert(values_[h].end(), v.begin(), v.end());
    }
    rows_.push_back(std::move(row));
  }

  double logit = score(first, len, cls);
  emitted_.push_back({first, len, cls, answer.tau, logit});
  if (config_.streaming_logit_averaging) {
    // Earlier answers at the same tau now also see this one.
    for (auto& e : emitted_)
      if (e.tau == answer.tau && e.first != first) e.logit = score(e.first, e.len, e.cls);
    double s = 0.0;
    std::size_t count = 0;
    for (const auto& e : emitted_) {
      if (e.cls != cls) continue;
      s += e.logit;
      ++count;
    }
    logit = s / static_cast<double>(count);
  }
  Prediction pr{answer.key(), answer.tau, logit, sigmoid_scalar(logit)};
  predictions_.t = answer.tau;
  predictions_.entries.push_back(pr);
  return pr;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_to_string(const MsvConfig& config, const MsvParams& params) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["config"] = msv_config_to_json(config);
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : params.named()) tensors[name] = tensor_to_json(*t);
  doc["params"] = std::move(tensors);
  return doc.dump(1) + "\n";
}

std::pair<MsvConfig, MsvParams> checkpoint_from_string(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, std::string("checkpoint: ") + e.what());
  }
  if (doc.value("format_version", 0) != 1) throw ValidationError("unsupported checkpoint format");
  MsvConfig config = msv_config_from_json(doc.at("config"));
  MsvParams params = init_params(config, 0, 0.5);
  const auto& tensors = doc.at("params");
  for (auto& [name, t] : params.named()) {
    if (!tensors.contains(name)) throw ValidationError("checkpoint missing tensor '" + name + "'");
    Tensor loaded = tensor_from_json(tensors.at(name));
    if (loaded.shape() != t->shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has the wrong shape");
    }
    *t = std::move(loaded);
  }
  return {config, params};
}

}  // namespace msv
