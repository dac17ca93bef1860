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

#include "msv/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "msv/answer_equiv.hpp"
#include "msv/file_io.hpp"

namespace msv {
namespace {

// Trace files store reals as float32; parsing into float and dumping from
// float keeps the on-disk representation short and round-trip exact.
using TraceJson = nlohmann::basic_json<std::map, std::vector, std::string, bool,
                                       std::int64_t, std::uint64_t, float>;

std::string answer_path(std::size_t s, std::size_t a) {
  return "sequences[" + std::to_string(s) + "].answers[" + std::to_string(a) + "]";
}

const TraceJson& require(const TraceJson& obj, const char* name, const std::string& path) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    throw ValidationError("missing field '" + path + (path.empty() ? "" : ".") + name + "'");
  }
  return *it;
}

std::string field(const std::string& path, const char* name) {
  return path.empty() ? std::string(name) : path + "." + name;
}

std::int64_t as_int(const TraceJson& v, const std::string& where) {
  if (!v.is_number_integer()) throw ValidationError("field '" + where + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string as_string(const TraceJson& v, const std::string& where) {
  if (!v.is_string()) throw ValidationError("field '" + where + "' must be a string");
  return v.get<std::string>();
}

double as_real(const TraceJson& v, const std::string& where) {
  if (!v.is_number()) throw ValidationError("field '" + where + "' must be a number");
  return static_cast<double>(v.get<float>());
}

}  // namespace

std::string_view to_string(Mode mode) {
  return mode == Mode::kTerminal ? "terminal" : "streaming";
}

Mode parse_mode(std::string_view name) {
  if (name == "terminal") return Mode::kTerminal;
  if (name == "streaming") return Mode::kStreaming;
  throw ValidationError("unknown mode '" + std::string(name) + "'");
}

std::size_t ProblemTrace::num_answers() const noexcept {
  std::size_t total = 0;
  for (const auto& s : sequences) total += s.answers.size();
  return total;
}

std::int64_t ProblemTrace::max_tau() const {
  std::int64_t t = std::numeric_limits<std::int64_t>::min();
  for (const auto& s : sequences)
    for (const auto& a : s.answers) t = std::max(t, a.tau);
  if (t == std::numeric_limits<std::int64_t>::min()) throw ContractError("trace has no answers");
  return t;
}

std::int64_t ProblemTrace::min_tau() const {
  std::int64_t t = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : sequences)
    for (const auto& a : s.answers) t = std::min(t, a.tau);
  if (t == std::numeric_limits<std::int64_t>::max()) throw ContractError("trace has no answers");
  return t;
}

const AnswerRecord& ProblemTrace::answer(AnswerKey key) const {
  if (key.n == 0 || key.n > sequences.size() || key.k == 0 ||
      key.k > sequences[key.n - 1].answers.size()) {
    throw LookupError("no answer (" + std::to_string(key.n) + "," + std::to_string(key.k) +
                      ") in trace '" + problem_id + "'");
  }
  return sequences[key.n - 1].answers[key.k - 1];
}

AnswerRecord& ProblemTrace::answer(AnswerKey key) {
  return const_cast<AnswerRecord&>(std::as_const(*this).answer(key));
}

const AnswerRecord& ProblemTrace::terminal(std::size_t n) const {
  if (n == 0 || n > sequences.size() || sequences[n - 1].answers.empty()) {
    throw LookupError("sequence " + std::to_string(n) + " has no terminal answer");
  }
  return sequences[n - 1].answers.back();
}

void ProblemTrace::for_each_answer(const std::function<void(const AnswerRecord&)>& fn) const {
  for (const auto& s : sequences)
    for (const auto& a : s.answers) fn(a);
}

std::vector<std::string> validate_trace(const ProblemTrace& trace) {
  std::vector<std::string> out;
  auto at = [](std::size_t n, std::size_t k) {
    return "(" + std::to_string(n) + "," + std::to_string(k) + ")";
  };
  if (trace.sequences.empty()) out.push_back("trace requires N >= 1 sequences");
  if (trace.d == 0) out.push_back("hidden width d must be >= 1");
  for (std::size_t s = 0; s < trace.sequences.size(); ++s) {
    const auto& answers = trace.sequences[s].answers;
    const std::size_t n = s + 1;
    if (answers.empty()) out.push_back("sequence " + std::to_string(n) + " has no answers");
    if (trace.mode == Mode::kTerminal && answers.size() > 1) {
      out.push_back("terminal requires K=1 (sequence " + std::to_string(n) + " has K=" +
                    std::to_string(answers.size()) + ")");
    }
    for (std::size_t a = 0; a < answers.size(); ++a) {
      const auto& rec = answers[a];
      const std::size_t k = a + 1;
      if (rec.seq_index != n || rec.step != k) {
        out.push_back("answer " + at(n, k) + " is labelled " + at(rec.seq_index, rec.step));
      }
      if (rec.tau < 0) out.push_back("tau must be >= 0 at " + at(n, k));
      if (a > 0 && rec.tau <= answers[a - 1].tau) {
        out.push_back("tau not strictly increasing at " + at(n, k));
      }
      if (rec.hidden.rows() == 0) out.push_back("answer " + at(n, k) + " has L=0 tokens");
      if (rec.hidden.cols() != trace.d) {
        for (std::size_t i = 0; i < rec.hidden.rows(); ++i) {
          out.push_back("hidden row length " + std::to_string(rec.hidden.cols()) +
                        " != d=" + std::to_string(trace.d) + " at (" + std::to_string(n) +
                        "," + std::to_string(k) + "," + std::to_string(i + 1) + ")");
        }
      }
      for (std::size_t i = 0; i < rec.hidden.rows(); ++i) {
        const auto row = rec.hidden.row(i);
        if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); })) {
          out.push_back("non-finite hidden entry at (" + std::to_string(n) + "," +
                        std::to_string(k) + "," + std::to_string(i + 1) + ")");
        }
      }
      if (rec.logprobs && rec.logprobs->size() != rec.hidden.rows()) {
        out.push_back("logprobs length != L at " + at(n, k));
      }
      if (rec.label.has_value() != trace.gold.has_value()) {
        out.push_back("label must be present iff gold is present at " + at(n, k));
      }
      if (rec.label && *rec.label != 0 && *rec.label != 1) {
        out.push_back("label must be 0 or 1 at " + at(n, k));
      }
    }
  }
  return out;
}

ProblemTrace label_answers(ProblemTrace trace) {
  if (!trace.gold) {
    throw PreconditionError("label_answers requires a gold answer (problem '" +
                            trace.problem_id + "')");
  }
  const std::string gold = canonicalize(*trace.gold);
  for (auto& s : trace.sequences)
    for (auto& a : s.answers) a.label = canonicalize(a.text) == gold ? 1 : 0;
  return trace;
}

void annotate(ProblemTrace& trace) {
  for (auto& s : trace.sequences)
    for (auto& a : s.answers) a.canonical = canonicalize(a.text);
  if (trace.gold) trace = label_answers(std::move(trace));
}

ProblemTrace parse_trace_line(std::string_view line, std::size_t line_number) {
  TraceJson doc;
  try {
    doc = TraceJson::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_number, e.what());
  }
  try {
    if (!doc.is_object()) throw ValidationError("trace line must be a JSON object");
    ProblemTrace trace;
    trace.problem_id = as_string(require(doc, "problem_id", ""), "problem_id");
    if (auto it = doc.find("prompt"); it != doc.end() && !it->is_null()) {
      trace.prompt = as_string(*it, "prompt");
    }
    if (auto it = doc.find("gold"); it != doc.end() && !it->is_null()) {
      trace.gold = as_string(*it, "gold");
    }
    trace.mode = parse_mode(as_string(require(doc, "mode", ""), "mode"));
    const std::int64_t d = as_int(require(doc, "d", ""), "d");
    if (d <= 0) throw ValidationError("field 'd' must be positive");
    trace.d = static_cast<std::size_t>(d);

    const auto& seqs = require(doc, "sequences", "");
    if (!seqs.is_array()) throw ValidationError("field 'sequences' must be an array");
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const std::string spath = "sequences[" + std::to_string(s) + "]";
      if (!seqs[s].is_object()) throw ValidationError("field '" + spath + "' must be an object");
      const auto& answers = require(seqs[s], "answers", spath);
      if (!answers.is_array()) {
        throw ValidationError("field '" + field(spath, "answers") + "' must be an array");
      }
      SequenceRecord seq;
      for (std::size_t a = 0; a < answers.size(); ++a) {
        const std::string apath = answer_path(s, a);
        const auto& obj = answers[a];
        if (!obj.is_object()) throw ValidationError("field '" + apath + "' must be an object");
        AnswerRecord rec;
        rec.seq_index = s + 1;
        const std::int64_t k = as_int(require(obj, "k", apath), field(apath, "k"));
        if (k < 1) throw ValidationError("field '" + field(apath, "k") + "' must be >= 1");
        rec.step = static_cast<std::size_t>(k);
        rec.tau = as_int(require(obj, "tau", apath), field(apath, "tau"));
        rec.text = as_string(require(obj, "text", apath), field(apath, "text"));
        const auto& hidden = require(obj, "hidden", apath);
        const std::string hpath = field(apath, "hidden");
        if (!hidden.is_array()) throw ValidationError("field '" + hpath + "' must be an array");
        rec.hidden = Matrix(hidden.size(), trace.d);
        for (std::size_t i = 0; i < hidden.size(); ++i) {
          const std::string rpath = hpath + "[" + std::to_string(i) + "]";
          if (!hidden[i].is_array()) throw ValidationError("field '" + rpath + "' must be an array");
          if (hidden[i].size() != trace.d) {
            throw DimensionError("field '" + rpath + "' has " + std::to_string(hidden[i].size()) +
                                 " entries but d=" + std::to_string(trace.d));
          }
          for (std::size_t c = 0; c < trace.d; ++c) {
            rec.hidden(i, c) = as_real(hidden[i][c], rpath);
          }
        }
        if (auto it = obj.find("logprobs"); it != obj.end() && !it->is_null()) {
          const std::string lpath = field(apath, "logprobs");
          if (!it->is_array()) throw ValidationError("field '" + lpath + "' must be an array");
          std::vector<double> lp;
          lp.reserve(it->size());
          for (const auto& v : *it) lp.push_back(as_real(v, lpath));
          rec.logprobs = std::move(lp);
        }
        seq.answers.push_back(std::move(rec));
      }
      trace.sequences.push_back(std::move(seq));
    }
    annotate(trace);
    if (auto violations = validate_trace(trace); !violations.empty()) {
      std::string msg = "trace '" + trace.problem_id + "' is invalid: " + violations.front();
      if (violations.size() > 1) msg += " (+" + std::to_string(violations.size() - 1) + " more)";
      throw ValidationError(msg);
    }
    return trace;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError("line " + std::to_string(line_number) + ": " + e.what());
  }
}

std::string format_trace_line(const ProblemTrace& trace) {
  TraceJson doc = TraceJson::object();
  doc["problem_id"] = trace.problem_id;
  if (trace.prompt) doc["prompt"] = *trace.prompt;
  if (trace.gold) doc["gold"] = *trace.gold;
  doc["mode"] = std::string(to_string(trace.mode));
  doc["d"] = static_cast<std::int64_t>(trace.d);
  TraceJson seqs = TraceJson::array();
  for (const auto& s : trace.sequences) {
    TraceJson answers = TraceJson::array();
    for (const auto& a : s.answers) {
      TraceJson obj = TraceJson::object();
      obj["k"] = static_cast<std::int64_t>(a.step);
      obj["tau"] = a.tau;
      obj["text"] = a.text;
      TraceJson hidden = TraceJson::array();
      for (std::size_t i = 0; i < a.hidden.rows(); ++i) {
        TraceJson row = TraceJson::array();
        for (double v : a.hidden.row(i)) row.push_back(static_cast<float>(v));
        hidden.push_back(std::move(row));
      }
      obj["hidden"] = std::move(hidden);
      if (a.logprobs) {
        TraceJson lp = TraceJson::array();
        for (double v : *a.logprobs) lp.push_back(static_cast<float>(v));
        obj["logprobs"] = std::move(lp);
      }
      answers.push_back(std::move(obj));
    }
    TraceJson seq = TraceJson::object();
    seq["answers"] = std::move(answers);
    seqs.push_back(std::move(seq));
  }
  doc["sequences"] = std::move(seqs);
  return doc.dump();
}

std::vector<ProblemTrace> read_traces(std::istream& in) {
  std::vector<ProblemTrace> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    out.push_back(parse_trace_line(line, line_number));
  }
  return out;
}

std::vector<ProblemTrace> load_traces(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot open trace file " + path.string());
  return read_traces(in);
}

void write_traces(std::ostream& out, const std::vector<ProblemTrace>& traces) {
  for (const auto& t : traces) out << format_trace_line(t) << '\n';
}

void save_traces(const std::filesystem::path& path, const std::vector<ProblemTrace>& traces) {
  std::ostringstream ss;
  write_traces(ss, traces);
  write_file_atomic(path, ss.str());
}

ProblemTrace select_sequences(const ProblemTrace& trace,
                              const std::vector<std::size_t>& seq_indices) {
  ProblemTrace out;
  out.problem_id = trace.problem_id;
  out.prompt = trace.prompt;
  out.gold = trace.gold;
  out.mode = trace.mode;
  out.d = trace.d;
  out.sequences.reserve(seq_indices.size());
  for (std::size_t i = 0; i < seq_indices.size(); ++i) {
    const std::size_t n = seq_indices[i];
    if (n == 0 || n > trace.sequences.size()) {
      throw LookupError("sequence " + std::to_string(n) + " out of range");
    }
    SequenceRecord seq = trace.sequences[n - 1];
    for (auto& a : seq.answers) a.seq_index = i + 1;
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

}  // namespace msv
