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

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msv/matrix.hpp"

namespace msv {

enum class Mode { kTerminal, kStreaming };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

// 1-based (sequence, step) address of an answer inside a trace.
struct AnswerKey {
  std::size_t n = 0;
  std::size_t k = 0;
  friend auto operator<=>(const AnswerKey&, const AnswerKey&) = default;
};

// One intermediate or terminal answer together with the last-layer hidden
// states of its tokens.
struct AnswerRecord {
  std::size_t seq_index = 0;  // n, 1-based
  std::size_t step = 0;       // k, 1-based
  std::int64_t tau = 0;       // token position on the shared decoding clock
  std::string text;
  std::string canonical;      // filled from `text` on load
  Matrix hidden;              // L_k x d
  std::optional<std::vector<double>> logprobs;
  std::optional<int> label;

  std::size_t length() const noexcept { return hidden.rows(); }
  AnswerKey key() const noexcept { return {seq_index, step}; }

  friend bool operator==(const AnswerRecord&, const AnswerRecord&) = default;
};

struct SequenceRecord {
  std::vector<AnswerRecord> answers;
  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

// N parallel sequences for one problem. The global termination time T is not
// stored; it is max_tau().
struct ProblemTrace {
  std::string problem_id;
  std::optional<std::string> prompt;
  std::optional<std::string> gold;
  Mode mode = Mode::kTerminal;
  std::size_t d = 0;
  std::vector<SequenceRecord> sequences;

  std::size_t num_sequences() const noexcept { return sequences.size(); }
  std::size_t num_answers() const noexcept;
  std::int64_t max_tau() const;
  std::int64_t min_tau() const;

  // Throws LookupError for an unknown (n, k).
  const AnswerRecord& answer(AnswerKey key) const;
  AnswerRecord& answer(AnswerKey key);
  const AnswerRecord& terminal(std::size_t n) const;

  // Visits answers in sequence-major, then step order.
  void for_each_answer(const std::function<void(const AnswerRecord&)>& fn) const;

  friend bool operator==(const ProblemTrace&, const ProblemTrace&) = default;
};

// Every violated invariant of AnswerRecord / ProblemTrace, as readable
// messages. Empty means the trace is well formed.
std::vector<std::string> validate_trace(const ProblemTrace& trace);

// Sets every answer's label to 1[text ~ gold]. Throws PreconditionError when
// the trace has no gold answer.
ProblemTrace label_answers(ProblemTrace trace);

// Recomputes canonical forms (and labels, when gold is present) in place.
void annotate(ProblemTrace& trace);

// JSON-Lines I/O. Hidden states and log-probabilities are written as 32-bit
// reals; canonical forms and labels are never written.
ProblemTrace parse_trace_line(std::string_view line, std::size_t line_number = 1);
std::string format_trace_line(const ProblemTrace& trace);
std::vector<ProblemTrace> read_traces(std::istream& in);
std::vector<ProblemTrace> load_traces(const std::filesystem::path& path);
void write_traces(std::ostream& out, const std::vector<ProblemTrace>& traces);
void save_traces(const std::filesystem::path& path,
                 const std::vector<ProblemTrace>& traces);

// Returns a copy restricted to the listed sequences (1-based, in the given
// order), renumbered 1..size. Used for grouping and sub-sampling.
ProblemTrace select_sequences(const ProblemTrace& trace,
                              const std::vector<std::size_t>& seq_indices);

}  // namespace msv
