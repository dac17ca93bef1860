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

#include "msv/answer_equiv.hpp"

#include <cctype>

#include <boost/multiprecision/cpp_int.hpp>

namespace msv {
namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

constexpr unsigned kMaxBits = 4096;
constexpr long kMaxExponent = 1024;

struct Fail {};

class ExprParser {
 public:
  explicit ExprParser(std::string_view src) : src_(src) {}

  cpp_rational parse() {
    cpp_rational v = expr();
    if (pos_ != src_.size()) throw Fail{};
    return v;
  }

 private:
  static cpp_rational checked(cpp_rational v) {
    if (msb_or_zero(numerator(v)) > kMaxBits || msb_or_zero(denominator(v)) > kMaxBits) {
      throw Fail{};
    }
    return v;
  }

  static unsigned msb_or_zero(const cpp_int& v) {
    return v == 0 ? 0u : static_cast<unsigned>(boost::multiprecision::msb(abs(v)));
  }

  bool eat(char c) {
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  bool eat(std::string_view word) {
    if (src_.substr(pos_, word.size()) == word) {
      pos_ += word.size();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!eat(c)) throw Fail{};
  }

  cpp_rational expr() {
    cpp_rational v = term();
    for (;;) {
      if (eat('+')) {
        v = checked(v + term());
      } else if (eat('-')) {
        v = checked(v - term());
      } else {
        return v;
      }
    }
  }

  cpp_rational term() {
    cpp_rational v = unary();
    for (;;) {
      if (eat('*')) {
        v = checked(v * unary());
      } else if (eat('/')) {
        cpp_rational rhs = unary();
        if (rhs == 0) throw Fail{};
        v = checked(v / rhs);
      } else {
        return v;
      }
    }
  }

  cpp_rational unary() {
    if (eat('+')) return unary();
    if (eat('-')) return -unary();
    return power();
  }

  cpp_rational power() {
    cpp_rational base = primary();
    if (!eat('^')) return base;
    cpp_rational e = unary();
    if (denominator(e) != 1) throw Fail{};
    const cpp_int& en = numerator(e);
    if (en > kMaxExponent || en < -kMaxExponent) throw Fail{};
    long exp = en.convert_to<long>();
    if (exp < 0 && base == 0) throw Fail{};
    cpp_rational result = 1;
    cpp_rational factor = exp < 0 ? cpp_rational(1) / base : base;
    for (long i = 0, n = exp < 0 ? -exp : exp; i < n; ++i) result = checked(result * factor);
    return result;
  }

  cpp_rational primary() {
    if (eat('(')) {
      cpp_rational v = expr();
      expect(')');
      return v;
    }
    if (eat("\\frac")) {
      expect('{');
      cpp_rational num = expr();
      expect('}');
      expect('{');
      cpp_rational den = expr();
      expect('}');
      if (den == 0) throw Fail{};
      return checked(num / den);
    }
    if (eat('{')) {
      cpp_rational v = expr();
      expect('}');
      return v;
    }
    return number();
  }

  cpp_rational number() {
    std::size_t start = pos_;
    cpp_int whole = 0;
    cpp_int frac = 0;
    cpp_int scale = 1;
    std::size_t digits = 0;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
      whole = whole * 10 + (src_[pos_++] - '0');
      ++digits;
    }
    if (eat('.')) {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        frac = frac * 10 + (src_[pos_++] - '0');
        scale *= 10;
        ++digits;
      }
    }
    if (digits == 0 || pos_ - start > kMaxBits / 3) throw Fail{};
    return cpp_rational(whole * scale + frac, scale);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Removes one outer \boxed{...} when its closing brace ends the string.
std::string_view strip_boxed(std::string_view s) {
  constexpr std::string_view kBoxed = "\\boxed{";
  if (s.substr(0, kBoxed.size()) != kBoxed || s.empty() || s.back() != '}') return s;
  int depth = 0;
  for (std::size_t i = kBoxed.size() - 1; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) {
      if (i + 1 != s.size()) return s;
      return trim(s.substr(kBoxed.size(), s.size() - kBoxed.size() - 1));
    }
  }
  return s;
}

std::string format_rational(const cpp_rational& v) {
  std::string out = numerator(v).str();
  if (denominator(v) != 1) out += "/" + denominator(v).str();
  return out;
}

std::optional<std::string> parse_stripped(std::string_view body) {
  std::string compact;
  compact.reserve(body.size());
  for (char c : body)
    if (!is_space(c)) compact.push_back(c);
  if (compact.empty()) return std::nullopt;
  try {
    return format_rational(ExprParser(compact).parse());
  } catch (const Fail&) {
    return std::nullopt;
  }
}

}  // namespace

std::optional<std::string> evaluate_rational(std::string_view text) {
  return parse_stripped(strip_boxed(trim(text)));
}

std::string canonicalize(std::string_view text) {
  const std::string_view body = strip_boxed(trim(text));
  if (auto exact = parse_stripped(body)) return *exact;
  std::string out;
  out.reserve(body.size());
  bool pending_space = false;
  for (char c : body) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::size_t EquivalencePartition::class_id(AnswerKey key) const {
  auto it = class_of.find(key);
  if (it == class_of.end()) {
    throw LookupError("answer (" + std::to_string(key.n) + "," + std::to_string(key.k) +
                      ") is not in the partition");
  }
  return it->second;
}

EquivalencePartition partition(const ProblemTrace& trace) {
  EquivalencePartition part;
  std::map<std::string, std::size_t> ids;
  trace.for_each_answer([&](const AnswerRecord& a) {
    std::string canon = canonicalize(a.text);
    auto [it, inserted] = ids.emplace(std::move(canon), part.members.size());
    if (inserted) part.members.emplace_back();
    part.class_of[a.key()] = it->second;
    part.members[it->second].push_back(a.key());
  });
  return part;
}

double vote_fraction(const ProblemTrace& trace, AnswerKey key, const EquivalencePartition& part) {
  const AnswerRecord& target = trace.answer(key);
  const std::size_t cls = part.class_id(key);
  const std::size_t n_seq = trace.num_sequences();
  std::size_t count = 0;
  for (std::size_t m = 1; m <= n_seq; ++m) {
    const auto& answers = trace.sequences[m - 1].answers;
    const AnswerRecord* latest = nullptr;
    if (trace.mode == Mode::kTerminal) {
      if (!answers.empty()) latest = &answers.front();
    } else {
      for (const auto& a : answers) {
        if (a.tau > target.tau) break;
        latest = &a;
      }
    }
    if (latest && part.class_id(latest->key()) == cls) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(n_seq);
}

}  // namespace msv
