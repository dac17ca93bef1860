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

#include <filesystem>
#include <sstream>

#include "../support.hpp"
#include "msv/trace.hpp"

namespace msv {
namespace {

const char* kTwoSequenceLine =
    R"({"problem_id":"q1","gold":"2+2","mode":"terminal","d":4,"sequences":[)"
    R"({"answers":[{"k":1,"tau":10,"text":"4","hidden":[[0.5,1,-1,0],[0,0,0,0.25]]}]},)"
    R"({"answers":[{"k":1,"tau":12,"text":"5","hidden":[[1,2,3,4]],"logprobs":[-0.5]}]}]})";

bool has_violation(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

TEST(TraceIo, ParsesHandWrittenLine) {
  const ProblemTrace t = parse_trace_line(kTwoSequenceLine);
  EXPECT_EQ(t.problem_id, "q1");
  EXPECT_EQ(t.num_sequences(), 2u);
  EXPECT_EQ(t.d, 4u);
  EXPECT_EQ(t.answer({1, 1}).hidden(0, 0), 0.5);
  EXPECT_EQ(t.answer({1, 1}).length(), 2u);
  EXPECT_EQ(t.answer({2, 1}).logprobs->at(0), -0.5);
  EXPECT_EQ(t.answer({1, 1}).label, 1);
  EXPECT_EQ(t.answer({2, 1}).label, 0);
  EXPECT_EQ(t.max_tau(), 12);
  EXPECT_TRUE(validate_trace(t).empty());
}

TEST(TraceIo, EmptyInputGivesNoTraces) {
  std::istringstream in("");
  EXPECT_TRUE(read_traces(in).empty());
}

TEST(TraceIo, MalformedJsonReportsLine) {
  std::istringstream in(std::string(kTwoSequenceLine) + "\n{not json\n");
  try {
    read_traces(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(TraceIo, DecreasingTauIsValidationError) {
  const std::string line =
      R"({"problem_id":"q","mode":"streaming","d":1,"sequences":[{"answers":[)"
      R"({"k":1,"tau":9,"text":"1","hidden":[[0]]},{"k":2,"tau":3,"text":"2","hidden":[[0]]}]}]})";
  EXPECT_THROW(parse_trace_line(line), ValidationError);
}

TEST(TraceIo, MissingFieldNamesPath) {
  const std::string line =
      R"({"problem_id":"q","mode":"terminal","d":1,"sequences":[{"answers":[{"k":1,"text":"1","hidden":[[0]]}]}]})";
  try {
    parse_trace_line(line, 7);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("line 7"), std::string::npos) << what;
    EXPECT_NE(what.find("sequences[0].answers[0]"), std::string::npos) << what;
    EXPECT_NE(what.find("tau"), std::string::npos) << what;
  }
}

TEST(TraceIo, WrongRowWidthIsDimensionError) {
  const std::string line =
      R"({"problem_id":"q","mode":"terminal","d":2,"sequences":[{"answers":[{"k":1,"tau":0,"text":"1","hidden":[[0,1,2]]}]}]})";
  EXPECT_THROW(parse_trace_line(line), DimensionError);
}

TEST(TraceIo, RoundTripIsExact) {
  CounterRng rng(11, 0);
  std::vector<ProblemTrace> traces;
  for (int i = 0; i < 5; ++i) {
    testing::TraceShape s;
    s.mode = i % 2 ? Mode::kTerminal : Mode::kStreaming;
    ProblemTrace t = testing::random_trace(rng, s, "r" + std::to_string(i));
    // Files hold 32-bit reals.
    for (auto& seq : t.sequences) {
      for (auto& a : seq.answers) {
        for (double& x : a.hidden.data()) x = static_cast<float>(x);
        for (double& x : *a.logprobs) x = static_cast<float>(x);
      }
    }
    if (i == 3) {
      t.gold.reset();
      for (auto& seq : t.sequences)
        for (auto& a : seq.answers) a.label.reset();
    }
    traces.push_back(std::move(t));
  }
  const auto path = std::filesystem::temp_directory_path() / "msv_trace_roundtrip.jsonl";
  save_traces(path, traces);
  const auto back = load_traces(path);
  ASSERT_EQ(back.size(), traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) EXPECT_EQ(back[i], traces[i]) << i;
  std::filesystem::remove(path);
}

ProblemTrace one_answer_trace(Mode mode) {
  ProblemTrace t;
  t.problem_id = "v";
  t.mode = mode;
  t.d = 2;
  t.sequences.resize(1);
  AnswerRecord a;
  a.seq_index = 1;
  a.step = 1;
  a.tau = 1;
  a.text = "1";
  a.hidden = Matrix(1, 2, 0.0);
  t.sequences[0].answers.push_back(a);
  return t;
}

TEST(ValidateTrace, TerminalRequiresSingleAnswer) {
  ProblemTrace t = one_answer_trace(Mode::kTerminal);
  AnswerRecord b = t.sequences[0].answers[0];
  b.step = 2;
  b.tau = 5;
  t.sequences[0].answers.push_back(b);
  EXPECT_TRUE(has_violation(validate_trace(t), "terminal requires K=1"));
}

TEST(ValidateTrace, WellFormedStreamingIsOk) {
  CounterRng rng(3, 0);
  EXPECT_TRUE(validate_trace(testing::random_trace(rng, {})).empty());
}

TEST(ValidateTrace, RowLengthViolationNamesPosition) {
  ProblemTrace t = one_answer_trace(Mode::kStreaming);
  t.sequences[0].answers[0].hidden = Matrix(1, 3, 0.0);
  EXPECT_TRUE(has_violation(validate_trace(t), "(1,1,1)"));
}

TEST(ValidateTrace, NonFiniteAndLabelRules) {
  ProblemTrace t = one_answer_trace(Mode::kStreaming);
  t.sequences[0].answers[0].hidden(0, 1) = std::nan("");
  t.sequences[0].answers[0].label = 1;  // no gold
  const auto v = validate_trace(t);
  EXPECT_TRUE(has_violation(v, "non-finite"));
  EXPECT_TRUE(has_violation(v, "label must be present iff gold"));
}

TEST(Labels, PaperExample) {
  ProblemTrace t = one_answer_trace(Mode::kTerminal);
  t.gold = "2+2";
  t.sequences.push_back(t.sequences[0]);
  t.sequences[0].answers[0].text = "4";
  t.sequences[1].answers[0].text = "5";
  t.sequences[1].answers[0].seq_index = 2;
  t = label_answers(t);
  EXPECT_EQ(t.answer({1, 1}).label, 1);
  EXPECT_EQ(t.answer({2, 1}).label, 0);
}

TEST(Labels, RationalFormsAgainstHalf) {
  ProblemTrace t = one_answer_trace(Mode::kTerminal);
  t.gold = "1/2";
  const char* texts[] = {"\\frac{2}{4}", "0.5", "x"};
  t.sequences.clear();
  for (std::size_t n = 0; n < 3; ++n) {
    SequenceRecord s;
    AnswerRecord a = one_answer_trace(Mode::kTerminal).sequences[0].answers[0];
    a.seq_index = n + 1;
    a.text = texts[n];
    s.answers.push_back(a);
    t.sequences.push_back(s);
  }
  t = label_answers(t);
  EXPECT_EQ(t.answer({1, 1}).label, 1);
  EXPECT_EQ(t.answer({2, 1}).label, 1);
  EXPECT_EQ(t.answer({3, 1}).label, 0);
  // Idempotent.
  EXPECT_EQ(label_answers(t), t);
}

TEST(Labels, ByteEqualTextIsCorrect) {
  ProblemTrace t = one_answer_trace(Mode::kTerminal);
  t.gold = "\\sqrt{x}";
  t.sequences[0].answers[0].text = "\\sqrt{x}";
  EXPECT_EQ(label_answers(t).answer({1, 1}).label, 1);
}

TEST(Labels, MissingGoldIsPrecondition) {
  EXPECT_THROW(label_answers(one_answer_trace(Mode::kTerminal)), PreconditionError);
}

TEST(Trace, TerminalAnswerCountEqualsN) {
  CounterRng rng(5, 0);
  testing::TraceShape s;
  s.mode = Mode::kTerminal;
  s.n = 6;
  EXPECT_EQ(testing::random_trace(rng, s).num_answers(), 6u);
}

TEST(Trace, SelectSequencesRenumbers) {
  CounterRng rng(6, 0);
  testing::TraceShape s;
  s.n = 4;
  const ProblemTrace t = testing::random_trace(rng, s);
  const ProblemTrace sub = select_sequences(t, {3, 1});
  ASSERT_EQ(sub.num_sequences(), 2u);
  EXPECT_EQ(sub.sequences[0].answers.size(), t.sequences[2].answers.size());
  EXPECT_EQ(sub.sequences[0].answers[0].seq_index, 1u);
  EXPECT_EQ(sub.sequences[1].answers[0].hidden, t.sequences[0].answers[0].hidden);
  EXPECT_TRUE(validate_trace(sub).empty());
}

TEST(Trace, UnknownAnswerIsLookupError) {
  EXPECT_THROW(one_answer_trace(Mode::kTerminal).answer({2, 1}), LookupError);
}

}  // namespace
}  // namespace msv
