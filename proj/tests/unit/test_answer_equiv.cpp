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

#include <gmpxx.h>
#include <gtest/gtest.h>

#include <optional>

#include "../support.hpp"
#include "msv/answer_equiv.hpp"

namespace msv {
namespace {

TEST(Canonicalize, PaperExample) { EXPECT_EQ(canonicalize("\\boxed{2+2}"), "4"); }
TEST(Canonicalize, EmptyFallsBack) { EXPECT_EQ(canonicalize(""), ""); }
TEST(Canonicalize, FractionReduces) { EXPECT_EQ(canonicalize("\\frac{2}{4}"), "1/2"); }

TEST(Canonicalize, Forms) {
  EXPECT_EQ(canonicalize("  -6/4 "), "-3/2");
  EXPECT_EQ(canonicalize("3/-6"), "-1/2");
  EXPECT_EQ(canonicalize("2^-2"), "1/4");
  EXPECT_EQ(canonicalize("-2^2"), "-4");
  EXPECT_EQ(canonicalize("2^3^2"), "512");
  EXPECT_EQ(canonicalize("(1 + 2) * 3"), "9");
  EXPECT_EQ(canonicalize(".25"), "1/4");
  EXPECT_EQ(canonicalize("{7}"), "7");
  EXPECT_EQ(canonicalize("\\boxed{\\frac{10}{4}}"), "5/2");
}

TEST(Canonicalize, Fallbacks) {
  EXPECT_EQ(canonicalize("  Hello   World "), "hello world");
  EXPECT_EQ(canonicalize("1/0"), "1/0");
  EXPECT_EQ(canonicalize("2^(1/2)"), "2^(1/2)");
  EXPECT_EQ(canonicalize("x+1"), "x+1");
  // Only one outer \boxed is stripped.
  EXPECT_EQ(canonicalize("\\boxed{\\boxed{3}}"), "\\boxed{3}");
  // Size cap.
  EXPECT_EQ(canonicalize("10^1000*10^1000"), "10^1000*10^1000");
}

TEST(Equivalent, Relation) {
  EXPECT_TRUE(equivalent("2+2", "4"));
  EXPECT_TRUE(equivalent("0.5", "1/2"));
  EXPECT_FALSE(equivalent("0.5", "1/3"));
  for (const char* s : {"", "abc", "1/0", "\\frac{1}{3}"}) EXPECT_TRUE(equivalent(s, s));
}

// Independent oracle: random expressions evaluated with GMP rationals.
struct Expr {
  std::string text;
  std::optional<mpq_class> value;  // nullopt: undefined (division by zero)
};

class ExprGen {
 public:
  explicit ExprGen(CounterRng& rng) : rng_(rng) {}

  Expr gen(int depth) {
    if (depth == 0 || rng_.uniform() < 0.3) return leaf();
    switch (rng_.uniform_int(7)) {
      case 0: return binary(depth, '+');
      case 1: return binary(depth, '-');
      case 2: return binary(depth, '*');
      case 3: return binary(depth, '/');
      case 4: {
        Expr a = gen(depth - 1), b = gen(depth - 1);
        Expr out{"\\frac{" + a.text + "}{" + b.text + "}", std::nullopt};
        if (a.value && b.value && *b.value != 0) out.value = mpq_class(*a.value / *b.value);
        return out;
      }
      case 5: {
        Expr a = gen(depth - 1);
        return {"(" + a.text + ")", a.value};
      }
      default: {
        Expr a = gen(depth - 1);
        const int e = static_cast<int>(rng_.uniform_int(7)) - 3;
        Expr out{"(" + a.text + ")^" + (e < 0 ? "(" + std::to_string(e) + ")" : std::to_string(e)),
                 std::nullopt};
        if (a.value && !(e < 0 && *a.value == 0)) {
          mpq_class r = 1;
          const mpq_class f = e < 0 ? mpq_class(1 / *a.value) : *a.value;
          for (int i = 0; i < std::abs(e); ++i) r *= f;
          out.value = r;
        }
        return out;
      }
    }
  }

 private:
  Expr leaf() {
    const long whole = static_cast<long>(rng_.uniform_int(30));
    if (rng_.uniform() < 0.3) {
      const long frac = static_cast<long>(rng_.uniform_int(100));
      const std::string digits = (frac < 10 ? "0" : "") + std::to_string(frac);
      mpq_class v(whole * 100 + frac, 100);
      v.canonicalize();
      return {std::to_string(whole) + "." + digits, v};
    }
    return {std::to_string(whole), mpq_class(whole)};
  }

  Expr binary(int depth, char op) {
    Expr a = gen(depth - 1), b = gen(depth - 1);
    // Parenthesise both sides so the text's structure is the tree's.
    Expr out{"(" + a.text + ")" + op + "(" + b.text + ")", std::nullopt};
    if (!a.value || !b.value) return out;
    switch (op) {
      case '+': out.value = mpq_class(*a.value + *b.value); break;
      case '-': out.value = mpq_class(*a.value - *b.value); break;
      case '*': out.value = mpq_class(*a.value * *b.value); break;
      default:
        if (*b.value != 0) out.value = mpq_class(*a.value / *b.value);
    }
    return out;
  }

  CounterRng& rng_;
};

TEST(Canonicalize, MatchesGmpOracle) {
  CounterRng rng(2024, 0);
  ExprGen gen(rng);
  int defined = 0;
  for (int i = 0; i < 3000; ++i) {
    const Expr e = gen.gen(4);
    const std::optional<std::string> got = evaluate_rational(e.text);
    if (e.value) {
      ++defined;
      ASSERT_TRUE(got.has_value()) << e.text;
      EXPECT_EQ(*got, e.value->get_str()) << e.text;
      EXPECT_EQ(canonicalize("\\boxed{" + e.text + "}"), e.value->get_str());
    } else {
      EXPECT_FALSE(got.has_value()) << e.text;
    }
  }
  EXPECT_GT(defined, 2000);
}

TEST(Canonicalize, DecimalOracle) {
  mpq_class q("1234/1000");
  q.canonicalize();
  EXPECT_EQ(canonicalize("1.234"), q.get_str());
  EXPECT_EQ(canonicalize("2."), "2");
}

ProblemTrace texts_trace(const std::vector<std::vector<std::string>>& texts, Mode mode) {
  ProblemTrace t;
  t.problem_id = "p";
  t.mode = mode;
  t.d = 1;
  std::int64_t tau = 0;
  for (std::size_t n = 0; n < texts.size(); ++n) {
    SequenceRecord s;
    for (std::size_t k = 0; k < texts[n].size(); ++k) {
      AnswerRecord a;
      a.seq_index = n + 1;
      a.step = k + 1;
      a.tau = ++tau;
      a.text = texts[n][k];
      a.hidden = Matrix(1, 1, 0.0);
      s.answers.push_back(a);
    }
    t.sequences.push_back(s);
  }
  annotate(t);
  return t;
}

TEST(Partition, TerminalGrouping) {
  const auto part = partition(texts_trace({{"4"}, {"5"}, {"4"}}, Mode::kTerminal));
  EXPECT_EQ(part.class_id({1, 1}), 0u);
  EXPECT_EQ(part.class_id({2, 1}), 1u);
  EXPECT_EQ(part.class_id({3, 1}), 0u);
  EXPECT_EQ(part.num_classes(), 2u);
}

TEST(Partition, AllDistinct) {
  EXPECT_EQ(partition(texts_trace({{"1"}, {"2"}, {"3"}, {"4"}}, Mode::kTerminal)).num_classes(), 4u);
}

TEST(Partition, StreamingCrossSequence) {
  const auto part = partition(texts_trace({{"2+2", "7"}, {"1", "4"}}, Mode::kStreaming));
  EXPECT_EQ(part.class_id({1, 1}), part.class_id({2, 2}));
  EXPECT_THROW(part.class_id({3, 1}), LookupError);
}

TEST(Partition, ClassIffCanonicalEqual) {
  CounterRng rng(5, 0);
  for (int i = 0; i < 20; ++i) {
    const ProblemTrace t = testing::random_trace(rng, {});
    const auto part = partition(t);
    t.for_each_answer([&](const AnswerRecord& a) {
      t.for_each_answer([&](const AnswerRecord& b) {
        EXPECT_EQ(part.class_id(a.key()) == part.class_id(b.key()),
                  canonicalize(a.text) == canonicalize(b.text));
      });
    });
  }
}

TEST(VoteFraction, TerminalAndStreaming) {
  const ProblemTrace term = texts_trace({{"4"}, {"4"}, {"5"}}, Mode::kTerminal);
  const auto pt = partition(term);
  EXPECT_DOUBLE_EQ(vote_fraction(term, {1, 1}, pt), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(vote_fraction(term, {3, 1}, pt), 1.0 / 3.0);
  // Streaming: latest answer of each sequence at the target's tau (taus are
  // 1,2 for sequence 1 and 3,4 for sequence 2).
  const ProblemTrace st = texts_trace({{"4", "5"}, {"4", "5"}}, Mode::kStreaming);
  const auto ps = partition(st);
  EXPECT_DOUBLE_EQ(vote_fraction(st, {1, 1}, ps), 0.5);  // seq 2 silent at tau 1
  EXPECT_DOUBLE_EQ(vote_fraction(st, {2, 1}, ps), 0.5);  // seq 1 latest is "5"
  EXPECT_DOUBLE_EQ(vote_fraction(st, {2, 2}, ps), 1.0);
}

}  // namespace
}  // namespace msv
