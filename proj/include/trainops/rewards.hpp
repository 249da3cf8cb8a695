/* Copyright 2025 The trainops Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Verifiable RL rewards: binary answer / format / think components and
// their weighted mixture. The think reward needs an external judge and is
// always accepted as input, never computed here.

#ifndef TRAINOPS_REWARDS_HPP_
#define TRAINOPS_REWARDS_HPP_

#include <cmath>
#include <optional>
#include <string>

#include "trainops/curation.hpp"
#include "trainops/errors.hpp"
#include "trainops/textio.hpp"

namespace trainops::rewards {

struct RolloutOutput {
  std::string raw_text;
  std::optional<std::string> extracted_think;
  std::optional<std::string> extracted_answer;  // contents of the last \boxed{}
};

inline RolloutOutput parse_rollout(const std::string& raw_text) {
  RolloutOutput out;
  out.raw_text = raw_text;
  out.extracted_think = curation::extract_think_block(raw_text);
  out.extracted_answer = curation::extract_last_boxed(raw_text);
  return out;
}

struct RewardWeights {
  double w_answer = 0.7;
  double w_think = 0.2;
  double w_format = 0.1;

  void validate() const {
    auto in01 = [](double w) { return w >= 0.0 && w <= 1.0; };
    if (!in01(w_answer) || !in01(w_think) || !in01(w_format)) {
      throw ConfigError("reward weights must lie in [0,1]");
    }
    const double sum = w_answer + w_think + w_format;
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError("reward weights must sum to 1, got " + format_double(sum));
    }
  }
};

// Two-component preset for the verifiable stage, which uses only the answer
// and format signals (no judge in the loop).
inline RewardWeights verifiable_stage_weights() { return {0.9, 0.0, 0.1}; }

// 1 iff the rollout text is a single well-nested think block followed by a
// balanced \boxed{} answer. Shares the exact predicate used in curation.
inline int format_reward(const RolloutOutput& out) {
  return curation::validate_cot_format(out.raw_text) ? 1 : 0;
}

namespace detail {

// Strips layers of whole-string wrapping: braces covering the entire
// answer, $...$ math delimiters, and surrounding whitespace.
inline std::string strip_wrappers(std::string s) {
  for (;;) {
    s = std::string(trim(s));
    if (s.size() >= 2 && s.front() == '{' && s.back() == '}') {
      const std::size_t end = curation::detail::balanced_brace_end(s, 0);
      if (end == s.size() - 1) {
        s = s.substr(1, s.size() - 2);
        continue;
      }
    }
    if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
      s = s.substr(1, s.size() - 2);
      continue;
    }
    return s;
  }
}

inline std::string fold_case(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

inline std::string normalize_answer(const std::string& s) {
  return detail::fold_case(detail::strip_wrappers(s));
}

// Symmetric equivalence: numeric comparison with 1e-6 relative tolerance
// when both sides parse as numbers, exact normalized-string match otherwise.
inline bool answers_equivalent(const std::string& a, const std::string& b) {
  const std::string na = normalize_answer(a);
  const std::string nb = normalize_answer(b);
  const auto va = detail::parse_number(na);
  const auto vb = detail::parse_number(nb);
  if (va && vb) {
    const double scale = std::max(std::fabs(*va), std::fabs(*vb));
    return std::fabs(*va - *vb) <= 1e-6 * scale;
  }
  return na == nb;
}

// 1 iff an answer was extracted and it matches the gold answer; a rollout
// with no \boxed{} scores 0 rather than erroring.
inline int answer_reward(const RolloutOutput& out, const std::string& gold) {
  if (gold.empty()) throw InvalidInputError("answer_reward: empty gold answer");
  if (!out.extracted_answer) return 0;
  return answers_equivalent(*out.extracted_answer, gold) ? 1 : 0;
}

inline double mixed_reward(int answer_r, int think_r, int format_r,
                           const RewardWeights& w) {
  w.validate();
  auto binary = [](int r, const char* name) {
    if (r != 0 && r != 1) {
      throw InvalidInputError(std::string(name) + " reward must be 0 or 1");
    }
  };
  binary(answer_r, "answer");
  binary(think_r, "think");
  binary(format_r, "format");
  return w.w_answer * answer_r + w.w_think * think_r + w.w_format * format_r;
}

}  // namespace trainops::rewards

#endif  // TRAINOPS_REWARDS_HPP_
