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

#include "json_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace msv {
namespace {

template <typename T>
void read(const Json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(section + "." + key + " has the wrong type");
  }
}

Json optional_real(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& section) {
  if (!j.is_object()) throw ValidationError("section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return key == a; });
    if (!ok) throw UsageError("unknown key '" + key + "' in section '" + section + "'");
  }
}

Json tensor_to_json(const ad::Tensor& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ad::Tensor tensor_from_json(const Json& j) {
  if (!j.is_array()) throw ValidationError("tensor must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.front().size();
  ad::Tensor t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw DimensionError("ragged tensor rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw ValidationError("tensor entries must be numbers");
      t(r, c) = j[r][c].get<double>();
    }
  }
  return t;
}

Json msv_config_to_json(const MsvConfig& c) {
  Json masks = Json::array();
  for (MaskKind k : c.masks) masks.push_back(std::string(to_string(k)));
  return {{"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"masks", masks},
          {"mode", std::string(to_string(c.mode))},
          {"n_max", c.n_max},
          {"feature_augmentation", c.feature_augmentation},
          {"logit_averaging", c.logit_averaging},
          {"streaming_logit_averaging", c.streaming_logit_averaging},
          {"pooling", std::string(to_string(c.pooling))},
          {"group_size", c.group_size}};
}

MsvConfig msv_config_from_json(const Json& j, const std::string& section) {
  check_keys(j,
             {"kind", "d_model", "n_heads", "masks", "mode", "n_max", "feature_augmentation",
              "logit_averaging", "streaming_logit_averaging", "pooling", "group_size",
              "probe_hidden"},
             section);
  MsvConfig c;
  read(j, "d_model", c.d_model, section);
  read(j, "n_heads", c.n_heads, section);
  read(j, "n_max", c.n_max, section);
  read(j, "feature_augmentation", c.feature_augmentation, section);
  read(j, "streaming_logit_averaging", c.streaming_logit_averaging, section);
  read(j, "group_size", c.group_size, section);
  std::string s;
  if (j.contains("mode")) {
    read(j, "mode", s, section);
    c.mode = parse_mode(s);
    // Averaging defaults on only where it is defined.
    c.logit_averaging = c.mode == Mode::kTerminal;
  }
  read(j, "logit_averaging", c.logit_averaging, section);
  if (j.contains("pooling")) {
    read(j, "pooling", s, section);
    c.pooling = parse_pooling(s);
  }
  if (j.contains("masks")) {
    std::vector<std::string> names;
    read(j, "masks", names, section);
    c.masks.clear();
    for (const auto& n : names) c.masks.push_back(parse_mask_kind(n));
  }
  c.validate();
  return c;
}

Json gen_config_to_json(const GenConfig& c) {
  return {{"n_problems", c.n_problems},
          {"num_sequences", c.num_sequences},
          {"d", c.d},
          {"mode", std::string(to_string(c.mode))},
          {"min_answers", c.min_answers},
          {"max_answers", c.max_answers},
          {"tokens_per_answer", c.tokens_per_answer},
          {"vocab_size", c.vocab_size},
          {"p_correct_base", c.p_correct_base},
          {"p_correct_slope_in_k", c.p_correct_slope_in_k},
          {"difficulty_spread", c.difficulty_spread},
          {"herding_prob", c.herding_prob},
          {"herding_strength", c.herding_strength},
          {"snr_individual", c.snr_individual},
          {"snr_cross", c.snr_cross},
          {"noise_sigma", c.noise_sigma},
          {"tau_gap_min", c.tau_gap_min},
          {"tau_gap_max", c.tau_gap_max},
          {"seed", c.seed}};
}

GenConfig gen_config_from_json(const Json& j, const std::string& section) {
  check_keys(j,
             {"n_problems", "num_sequences", "d", "mode", "min_answers", "max_answers",
              "tokens_per_answer", "vocab_size", "p_correct_base", "p_correct_slope_in_k",
              "difficulty_spread", "herding_prob", "herding_strength", "snr_individual",
              "snr_cross", "noise_sigma", "tau_gap_min", "tau_gap_max", "seed"},
             section);
  GenConfig c;
  read(j, "n_problems", c.n_problems, section);
  read(j, "num_sequences", c.num_sequences, section);
  read(j, "d", c.d, section);
  if (j.contains("mode")) {
    std::string s;
    read(j, "mode", s, section);
    c.mode = parse_mode(s);
  }
  read(j, "min_answers", c.min_answers, section);
  read(j, "max_answers", c.max_answers, section);
  read(j, "tokens_per_answer", c.tokens_per_answer, section);
  read(j, "vocab_size", c.vocab_size, section);
  read(j, "p_correct_base", c.p_correct_base, section);
  read(j, "p_correct_slope_in_k", c.p_correct_slope_in_k, section);
  read(j, "difficulty_spread", c.difficulty_spread, section);
  read(j, "herding_prob", c.herding_prob, section);
  read(j, "herding_strength", c.herding_strength, section);
  read(j, "snr_individual", c.snr_individual, section);
  read(j, "snr_cross", c.snr_cross, section);
  read(j, "noise_sigma", c.noise_sigma, section);
  read(j, "tau_gap_min", c.tau_gap_min, section);
  read(j, "tau_gap_max", c.tau_gap_max, section);
  read(j, "seed", c.seed, section);
  c.validate();
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"lr_probe", c.lr_probe},
          {"lr_body", c.lr_body},
          {"lr_mixture", c.lr_mixture},
          {"lr_seq_embed", c.lr_seq_embed},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"warmup_fraction", c.warmup_fraction},
          {"max_grad_norm", c.max_grad_norm},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"shuffle_sequences", c.shuffle_sequences},
          {"lr_grid", c.lr_grid},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& section) {
  check_keys(j,
             {"lr_probe", "lr_body", "lr_mixture", "lr_seq_embed", "beta1", "beta2", "eps",
              "weight_decay", "warmup_fraction", "max_grad_norm", "batch_size", "epochs",
              "shuffle_sequences", "lr_grid", "seed", "select_lr"},
             section);
  TrainConfig c;
  read(j, "lr_probe", c.lr_probe, section);
  read(j, "lr_body", c.lr_body, section);
  read(j, "lr_mixture", c.lr_mixture, section);
  read(j, "lr_seq_embed", c.lr_seq_embed, section);
  read(j, "beta1", c.beta1, section);
  read(j, "beta2", c.beta2, section);
  read(j, "eps", c.eps, section);
  read(j, "weight_decay", c.weight_decay, section);
  read(j, "warmup_fraction", c.warmup_fraction, section);
  read(j, "max_grad_norm", c.max_grad_norm, section);
  read(j, "batch_size", c.batch_size, section);
  read(j, "epochs", c.epochs, section);
  read(j, "shuffle_sequences", c.shuffle_sequences, section);
  read(j, "lr_grid", c.lr_grid, section);
  read(j, "seed", c.seed, section);
  c.validate();
  return c;
}

Json report_to_json(const Report& r) {
  Json rel = Json::array();
  for (const auto& b : r.reliability) {
    rel.push_back({{"lo", b.lo}, {"hi", b.hi}, {"confidence", b.confidence},
                   {"accuracy", b.accuracy}, {"count", b.count}});
  }
  Json bins = Json::array();
  for (const auto& b : r.token_bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count},
                    {"brier", optional_real(b.brier)}});
  }
  Json out = {{"verifier", r.verifier},
              {"aggregation", r.aggregation},
              {"mode", r.mode},
              {"N", r.n},
              {"problems", r.problems},
              {"answers", r.answers},
              {"auroc", optional_real(r.auroc)},
              {"brier", r.brier},
              {"nll", r.nll},
              {"ece", r.ece},
              {"reliability", rel},
              {"bon", {{"accuracy", r.bon.accuracy}, {"ece", r.bon.ece}, {"brier", r.bon.brier}}},
              {"bins", bins}};
  if (r.curve) {
    out["autc"] = r.curve->autc;
    out["token_budget"] = optional_real(r.token_budget);
    out["curve_points"] = r.curve->points.size();
  } else {
    out["autc"] = nullptr;
  }
  return out;
}

}  // namespace msv
