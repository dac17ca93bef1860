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

#include "msv/commands.hpp"

#include <sstream>

#include "json_io.hpp"
#include "msv/file_io.hpp"
#include "msv/synth.hpp"
#include "msv/training.hpp"

namespace msv {
namespace {

namespace fs = std::filesystem;

struct Data {
  std::vector<ProblemTrace> train, val, test;
  Mode mode = Mode::kTerminal;
};

Json load_config(const CommandOptions& options) {
  Json cfg = Json::object();
  if (options.config) {
    try {
      cfg = Json::parse(read_file(*options.config));
    } catch (const Json::parse_error& e) {
      throw ParseError(1, options.config->string() + ": " + e.what());
    }
  }
  check_keys(cfg, {"gen", "model", "train", "eval", "io"}, "config");
  for (const char* s : {"gen", "model", "train", "eval", "io"}) {
    if (!cfg.contains(s)) cfg[s] = Json::object();
  }
  check_keys(cfg["io"], {"traces", "train", "val", "test", "split", "split_seed", "checkpoint", "out"},
             "io");
  if (options.seed) {
    cfg["gen"]["seed"] = *options.seed;
    cfg["train"]["seed"] = *options.seed;
  }
  if (options.out) cfg["io"]["out"] = options.out->string();
  if (options.jobs) cfg["eval"]["jobs"] = *options.jobs;
  return cfg;
}

fs::path out_dir(const Json& cfg) {
  if (!cfg["io"].contains("out")) throw UsageError("no output directory (use --out or io.out)");
  return fs::path(cfg["io"]["out"].get<std::string>());
}

std::array<double, 3> split_fractions(const Json& io) {
  std::array<double, 3> f{0.75, 0.125, 0.125};
  if (io.contains("split")) {
    const auto v = io["split"].get<std::vector<double>>();
    if (v.size() != 3) throw ValidationError("io.split needs three fractions");
    f = {v[0], v[1], v[2]};
  }
  return f;
}

std::uint64_t split_seed(const Json& io) {
  return io.contains("split_seed") ? io["split_seed"].get<std::uint64_t>() : 0;
}

// Traces from io paths, an io.traces file, or the gen section, in that order.
Data load_data(Json& cfg) {
  Json& io = cfg["io"];
  Data data;
  if (io.contains("train") || io.contains("test")) {
    if (io.contains("train")) data.train = load_traces(io["train"].get<std::string>());
    if (io.contains("val")) data.val = load_traces(io["val"].get<std::string>());
    if (io.contains("test")) data.test = load_traces(io["test"].get<std::string>());
  } else {
    std::vector<ProblemTrace> all;
    if (io.contains("traces")) {
      all = load_traces(io["traces"].get<std::string>());
    } else if (!cfg["gen"].empty()) {
      const GenConfig g = gen_config_from_json(cfg["gen"]);
      cfg["gen"] = gen_config_to_json(g);
      all = generate(g);
    } else {
      throw UsageError("no traces: set io.train/io.test, io.traces or a gen section");
    }
    const auto f = split_fractions(io);
    io["split"] = f;
    io["split_seed"] = split_seed(io);
    Split s = split(std::move(all), f, split_seed(io));
    data.train = std::move(s.train);
    data.val = std::move(s.val);
    data.test = std::move(s.test);
  }
  for (auto* set : {&data.train, &data.val, &data.test}) {
    if (!set->empty()) {
      data.mode = set->front().mode;
      break;
    }
  }
  return data;
}

std::string model_kind(const Json& model) {
  return model.contains("kind") ? model["kind"].get<std::string>() : std::string("msv");
}

std::size_t probe_hidden(const Json& model) {
  return model.contains("probe_hidden") ? model["probe_hidden"].get<std::size_t>() : 64;
}

// MSV settings from the model section; the mode follows the data unless set.
MsvConfig resolve_msv(const Json& model, Mode data_mode) {
  Json m = model;
  if (!m.contains("mode")) m["mode"] = std::string(to_string(data_mode));
  return msv_config_from_json(m);
}

Json resolved_model(const Json& model, const MsvConfig& c) {
  Json out = msv_config_to_json(c);
  out["kind"] = model_kind(model);
  out["probe_hidden"] = probe_hidden(model);
  return out;
}

std::vector<ProblemTrace> first_sequences(std::span<const ProblemTrace> traces, std::size_t n) {
  std::vector<ProblemTrace> out;
  for (const auto& t : traces) {
    if (t.num_sequences() < n) {
      throw PreconditionError("trace " + t.problem_id + " has fewer than " + std::to_string(n) +
                              " sequences");
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i + 1;
    out.push_back(select_sequences(t, idx));
  }
  return out;
}

std::string probe_checkpoint(const ProbeParams& p, Pooling pooling) {
  Json doc;
  doc["format_version"] = 1;
  doc["kind"] = "probe";
  doc["pooling"] = std::string(to_string(pooling));
  Json tensors = Json::object();
  for (auto& [name, t] : const_cast<ProbeParams&>(p).named()) tensors[name] = tensor_to_json(*t);
  doc["params"] = std::move(tensors);
  return doc.dump(1) + "\n";
}

std::pair<ProbeParams, Pooling> probe_from_checkpoint(const std::string& text) {
  Json doc = Json::parse(text);
  if (doc.value("kind", "") != "probe") throw ValidationError("checkpoint is not a probe");
  ProbeParams p;
  for (auto& [name, t] : p.named()) {
    if (!doc["params"].contains(name)) throw ValidationError("checkpoint missing '" + name + "'");
    *t = tensor_from_json(doc["params"][name]);
  }
  return {p, parse_pooling(doc.value("pooling", "last_token"))};
}

struct Trained {
  Verifier verifier;
  History history;
  std::optional<LrSelection> selection;
};

Trained train_verifier(const std::string& kind, const MsvConfig& msv_config, std::size_t hidden,
                       TrainConfig tc, bool select, const Data& data) {
  Trained out;
  out.verifier.kind = parse_verifier_kind(kind);
  if (out.verifier.kind == VerifierKind::kMsv || out.verifier.kind == VerifierKind::kProbe) {
    if (data.train.empty()) throw PreconditionError("training needs train traces");
    const ModelKind mk = out.verifier.kind == VerifierKind::kMsv ? ModelKind::kMsv : ModelKind::kProbe;
    if (select) {
      out.selection = lr_select(mk, msv_config, hidden, tc, data.train, data.val);
      (mk == ModelKind::kMsv ? tc.lr_body : tc.lr_probe) = out.selection->best_lr;
    }
    if (mk == ModelKind::kMsv) {
      auto r = out.selection && out.selection->msv ? std::move(*out.selection->msv)
                                                    : train_msv(msv_config, tc, data.train, data.val);
      out.verifier.msv_config = msv_config;
      out.verifier.msv_params = std::move(r.params);
      out.history = std::move(r.history);
    } else {
      auto r = out.selection && out.selection->probe
                   ? std::move(*out.selection->probe)
                   : train_probe(data.train.front().d, hidden, msv_config.pooling, tc, data.train,
                                 data.val);
      out.verifier.probe_params = std::move(r.params);
      out.verifier.probe_pooling = msv_config.pooling;
      out.history = std::move(r.history);
    }
    if (out.selection) {
      out.selection->msv.reset();
      out.selection->probe.reset();
    }
  }
  return out;
}

std::string selection_csv(const LrSelection& s) {
  std::string out = "lr,val_loss\n";
  for (const auto& [lr, loss] : s.val_losses) {
    out += format_real(lr) + "," + (std::isfinite(loss) ? format_real(loss) : "nan") + "\n";
  }
  return out;
}

EvalOptions eval_options(Json& ev) {
  check_keys(ev,
             {"verifiers", "aggregations", "n_list", "r", "guard_score", "ece_bins", "token_bins",
              "lambda_grid", "token_budget", "jobs"},
             "eval");
  EvalOptions o;
  if (ev.contains("r")) o.r = ev["r"].get<std::size_t>();
  if (ev.contains("guard_score")) o.guard_score = ev["guard_score"].get<double>();
  if (ev.contains("ece_bins")) o.ece_bins = ev["ece_bins"].get<std::size_t>();
  if (ev.contains("token_bins")) o.token_bin_edges = ev["token_bins"].get<std::vector<std::int64_t>>();
  if (ev.contains("lambda_grid")) o.lambda_grid = ev["lambda_grid"].get<std::vector<double>>();
  if (ev.contains("token_budget")) o.token_budget = ev["token_budget"].get<double>();
  if (ev.contains("jobs")) o.jobs = ev["jobs"].get<std::size_t>();
  ev["r"] = o.r;
  ev["guard_score"] = o.guard_score;
  ev["ece_bins"] = o.ece_bins;
  ev["jobs"] = o.jobs;
  return o;
}

std::vector<std::string> aggregations(Json& ev) {
  std::vector<std::string> aggs{"none"};
  if (ev.contains("aggregations")) aggs = ev["aggregations"].get<std::vector<std::string>>();
  for (const auto& a : aggs) {
    if (a != "none" && a != "weighted_vote") {
      throw ValidationError("unknown aggregation '" + a + "'");
    }
  }
  ev["aggregations"] = aggs;
  return aggs;
}

void write_config(const fs::path& dir, const Json& cfg) {
  write_file_atomic(dir / "config.json", cfg.dump(1) + "\n");
}

}  // namespace

std::string error_json(std::string_view kind, std::string_view message) {
  return Json{{"error", std::string(message)}, {"kind", std::string(kind)}}.dump();
}

void cmd_generate(const CommandOptions& options) {
  Json cfg = load_config(options);
  const fs::path dir = out_dir(cfg);
  const GenConfig g = gen_config_from_json(cfg["gen"]);
  cfg["gen"] = gen_config_to_json(g);
  std::vector<ProblemTrace> all = generate(g);
  const auto f = split_fractions(cfg["io"]);
  cfg["io"]["split"] = f;
  cfg["io"]["split_seed"] = split_seed(cfg["io"]);
  save_traces(dir / "traces.jsonl", all);
  Split s = split(std::move(all), f, split_seed(cfg["io"]));
  save_traces(dir / "train.jsonl", s.train);
  save_traces(dir / "val.jsonl", s.val);
  save_traces(dir / "test.jsonl", s.test);
  write_config(dir, cfg);
}

void cmd_train(const CommandOptions& options) {
  Json cfg = load_config(options);
  const fs::path dir = out_dir(cfg);
  Data data = load_data(cfg);
  const std::string kind = model_kind(cfg["model"]);
  if (kind != "msv" && kind != "probe") throw UsageError("model.kind '" + kind + "' is not trainable");
  const bool select = cfg["train"].value("select_lr", false);
  const TrainConfig tc = train_config_from_json(cfg["train"]);
  const MsvConfig mc = resolve_msv(cfg["model"], data.mode);
  const std::size_t hidden = probe_hidden(cfg["model"]);
  cfg["model"] = resolved_model(cfg["model"], mc);
  Json tj = train_config_to_json(tc);
  tj["select_lr"] = select;
  cfg["train"] = tj;

  Trained t = train_verifier(kind, mc, hidden, tc, select, data);
  if (t.selection) cfg["train"]["selected_lr"] = t.selection->best_lr;
  if (kind == "msv") {
    write_file_atomic(dir / "checkpoint.json",
                      checkpoint_to_string(t.verifier.msv_config, t.verifier.msv_params));
  } else {
    write_file_atomic(dir / "checkpoint.json",
                      probe_checkpoint(t.verifier.probe_params, t.verifier.probe_pooling));
  }
  write_file_atomic(dir / "history.csv", t.history.to_csv());
  if (t.selection) write_file_atomic(dir / "lr_select.csv", selection_csv(*t.selection));
  write_config(dir, cfg);
}

void cmd_eval(const CommandOptions& options) {
  Json cfg = load_config(options);
  const fs::path dir = out_dir(cfg);
  Data data = load_data(cfg);
  if (data.test.empty()) throw PreconditionError("evaluation needs test traces");
  const std::string kind = model_kind(cfg["model"]);
  Verifier v;
  v.kind = parse_verifier_kind(kind);
  if (v.kind == VerifierKind::kMsv || v.kind == VerifierKind::kProbe) {
    if (!cfg["io"].contains("checkpoint")) throw UsageError("io.checkpoint is required for " + kind);
    const std::string text = read_file(cfg["io"]["checkpoint"].get<std::string>());
    if (v.kind == VerifierKind::kMsv) {
      auto [c, p] = checkpoint_from_string(text);
      v.msv_config = c;
      v.msv_params = std::move(p);
      cfg["model"] = resolved_model(cfg["model"], c);
    } else {
      auto [p, pooling] = probe_from_checkpoint(text);
      v.probe_params = std::move(p);
      v.probe_pooling = pooling;
      cfg["model"]["kind"] = kind;
    }
  } else {
    cfg["model"] = Json{{"kind", kind}};
  }
  EvalOptions opts = eval_options(cfg["eval"]);
  std::vector<ProblemTrace> test = data.test;
  if (cfg["eval"].contains("n_list")) {
    const auto ns = cfg["eval"]["n_list"].get<std::vector<std::size_t>>();
    if (ns.size() != 1) throw UsageError("eval takes at most one N; use sweep for several");
    test = first_sequences(data.test, ns.front());
  }
  Json reports = Json::array();
  bool first = true;
  for (const auto& agg : aggregations(cfg["eval"])) {
    opts.weighted_vote = agg == "weighted_vote";
    const Report r = evaluate(v, test, opts);
    reports.push_back(report_to_json(r));
    if (r.curve) {
      write_file_atomic(dir / (first ? std::string("curve.csv") : "curve_" + agg + ".csv"),
                        curve_csv(*r.curve));
    }
    first = false;
  }
  write_file_atomic(dir / "report.json", Json{{"config", cfg}, {"reports", reports}}.dump(1) + "\n");
  write_config(dir, cfg);
}

void cmd_sweep(const CommandOptions& options) {
  Json cfg = load_config(options);
  const fs::path dir = out_dir(cfg);
  Data data = load_data(cfg);
  if (data.test.empty()) throw PreconditionError("sweep needs test traces");
  Json& ev = cfg["eval"];
  EvalOptions opts = eval_options(ev);
  std::vector<std::string> verifiers{"self_consistency"};
  if (ev.contains("verifiers")) verifiers = ev["verifiers"].get<std::vector<std::string>>();
  for (const auto& name : verifiers) parse_verifier_kind(name);
  ev["verifiers"] = verifiers;
  std::vector<std::size_t> ns{data.test.front().num_sequences()};
  if (ev.contains("n_list")) ns = ev["n_list"].get<std::vector<std::size_t>>();
  ev["n_list"] = ns;
  const auto aggs = aggregations(ev);
  const bool select = cfg["train"].value("select_lr", false);
  const TrainConfig tc = train_config_from_json(cfg["train"]);
  Json tj = train_config_to_json(tc);
  tj["select_lr"] = select;
  cfg["train"] = tj;
  const MsvConfig base = resolve_msv(cfg["model"], data.mode);
  const std::size_t hidden = probe_hidden(cfg["model"]);
  cfg["model"] = resolved_model(cfg["model"], base);

  Json rows = Json::array();
  std::string csv = "verifier,aggregation,N,auroc,brier,nll,ece,bon_accuracy,bon_ece,bon_brier,autc\n";
  std::optional<Trained> probe;
  for (const auto& name : verifiers) {
    for (std::size_t n : ns) {
      const std::vector<ProblemTrace> test = first_sequences(data.test, n);
      Trained t;
      if (name == "msv") {
        MsvConfig mc = base;
        mc.n_max = n;
        mc.group_size = 0;
        t = train_verifier(name, mc, hidden, tc, select, data);
        t.verifier.name = "msv_" + std::to_string(n);
      } else if (name == "probe") {
        if (!probe) probe = train_verifier(name, base, hidden, tc, select, data);
        t = *probe;
      } else {
        t.verifier.kind = parse_verifier_kind(name);
      }
      for (const auto& agg : aggs) {
        opts.weighted_vote = agg == "weighted_vote";
        const Report r = evaluate(t.verifier, test, opts);
        Json row = report_to_json(r);
        if (t.selection) row["selected_lr"] = t.selection->best_lr;
        rows.push_back(row);
        auto cell = [](const Json& j) {
          return j.is_null() ? std::string() : format_real(j.get<double>());
        };
        csv += r.verifier + "," + r.aggregation + "," + std::to_string(n) + "," +
               cell(row["auroc"]) + "," + format_real(r.brier) + "," + format_real(r.nll) + "," +
               format_real(r.ece) + "," + format_real(r.bon.accuracy) + "," +
               format_real(r.bon.ece) + "," + format_real(r.bon.brier) + "," +
               cell(row["autc"]) + "\n";
      }
    }
  }
  write_file_atomic(dir / "sweep.json", Json{{"config", cfg}, {"rows", rows}}.dump(1) + "\n");
  write_file_atomic(dir / "sweep.csv", csv);
  write_config(dir, cfg);
}

void run_command(std::string_view name, const CommandOptions& options) {
  if (name == "generate") return cmd_generate(options);
  if (name == "train") return cmd_train(options);
  if (name == "eval") return cmd_eval(options);
  if (name == "sweep") return cmd_sweep(options);
  throw UsageError("unknown command '" + std::string(name) + "'");
}

}  // namespace msv
