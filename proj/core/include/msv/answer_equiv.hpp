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

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msv/trace.hpp"

namespace msv {

// Canonical form of an answer string.
//
// Surrounding whitespace and one outer \boxed{...} are removed, then the
// remaining text (with all whitespace deleted) is parsed as an exact rational
// expression:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?          right associative, integer exponent
//   primary := number | '(' expr ')' | '{' expr '}' | '\frac' '{' expr '}' '{' expr '}'
//   number  := digit+ ('.' digit*)? | '.' digit+
//
// On success the reduced value is printed as "p/q", or "p" when q == 1, with
// the sign on p. Anything that does not parse (including division by zero,
// non-integer exponents and results above the size cap) falls back to the
// lower-cased text with whitespace runs collapsed to one space.
std::string canonicalize(std::string_view text);

// Exact rational value of `text` under the grammar above, printed as in
// canonicalize(); nullopt when the text does not parse.
std::optional<std::string> evaluate_rational(std::string_view text);

inline bool equivalent(std::string_view a, std::string_view b) {
  return canonicalize(a) == canonicalize(b);
}

// Equivalence classes of a trace's answers. Class ids are assigned in order
// of first appearance, scanning sequences then steps.
struct EquivalencePartition {
  std::map<AnswerKey, std::size_t> class_of;
  std::vector<std::vector<AnswerKey>> members;

  std::size_t num_classes() const noexcept { return members.size(); }
  std::size_t class_id(AnswerKey key) const;
};

EquivalencePartition partition(const ProblemTrace& trace);

// Fraction of sequences whose relevant answer is equivalent to (n, k).
// Terminal: over the N terminal answers. Streaming: over each sequence's
// latest answer with tau <= tau_k^(n); sequences that have not answered yet
// count in the denominator only.
double vote_fraction(const ProblemTrace& trace, AnswerKey key,
                     const EquivalencePartition& part);

}  // namespace msv
