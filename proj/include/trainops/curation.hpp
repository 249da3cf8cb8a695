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

// Data-curation gates and resamplers: caption/video score filters, judge
// precision/recall, dataset- and n-gram-level resampling, chain-of-thought
// hygiene (format check, dedup, redundancy, length balancing), difficulty
// filtering on pass@k, loss-mask generation, and embedding-bucket sampling.
//
// All filters are pure and order-preserving; keep decisions depend only on
// the record itself, so filtering is idempotent and permutation-compatible.

#ifndef TRAINOPS_CURATION_HPP_
#define TRAINOPS_CURATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "trainops/errors.hpp"
#include "trainops/rng.hpp"
#include "trainops/textio.hpp"

namespace trainops::curation {

// --- Record types ------------------------------------------------------------

enum class YesNoJudge { kYes, kNo, kMissing };

inline const char* judge_name(YesNoJudge j) {
  switch (j) {
    case YesNoJudge::kYes: return "Yes";
    case YesNoJudge::kNo: return "No";
    case YesNoJudge::kMissing: return "Missing";
  }
  return "Missing";
}

inline YesNoJudge judge_from_name(const std::string& s) {
  if (s == "Yes") return YesNoJudge::kYes;
  if (s == "No") return YesNoJudge::kNo;
  if (s == "Missing" || s.empty()) return YesNoJudge::kMissing;
  throw InvalidInputError("unknown yes_no_judge value: " + s);
}

// Caption quality scores: -1 encodes judge refusal, valid grades are 1..5.
struct CaptionRecord {
  std::string id;
  std::string caption_text;
  int vir_score = -1;  // visual information richness
  int ita_score = -1;  // image-text alignment
  YesNoJudge yes_no_judge = YesNoJudge::kMissing;
};

inline void validate_caption(const CaptionRecord& r) {
  auto ok = [](int s) { return s == -1 || (s >= 1 && s <= 5); };
  if (!ok(r.vir_score) || !ok(r.ita_score)) {
    throw InvalidInputError("caption " + r.id +
                            ": scores must be -1 or in [1,5]");
  }
}

struct VideoRecord {
  std::string id;
  int alignment = -1;   // -1 or 0..10
  int richness = -1;    // -1 or 0..7
  int difficulty = -1;  // -1 or 0..8
};

inline void validate_video(const VideoRecord& r) {
  auto ok = [](int s, int hi) { return s == -1 || (s >= 0 && s <= hi); };
  if (!ok(r.alignment, 10) || !ok(r.richness, 7) || !ok(r.difficulty, 8)) {
    throw InvalidInputError("video " + r.id + ": score out of range");
  }
}

enum class RecordKind { kDirect, kCot };

inline const char* record_kind_name(RecordKind k) {
  return k == RecordKind::kCot ? "CoT" : "Direct";
}

inline RecordKind record_kind_from_name(const std::string& s) {
  if (s == "CoT") return RecordKind::kCot;
  if (s == "Direct") return RecordKind::kDirect;
  throw InvalidInputError("unknown record_kind: " + s);
}

struct CotRecord {
  std::string id;
  std::string image_key;  // content hash of the image
  std::string question;
  std::string think_text;
  std::string answer_text;
  RecordKind record_kind = RecordKind::kDirect;
  std::uint64_t cot_token_len = 0;
};

inline void validate_cot_record(const CotRecord& r) {
  if (r.record_kind == RecordKind::kCot && r.think_text.empty()) {
    throw InvalidInputError("cot record " + r.id + ": CoT kind requires think_text");
  }
}

struct AttemptRecord {
  std::string id;
  std::vector<bool> attempts;  // per-rollout correctness, length k
  bool reasoning_heavy = false;
};

struct JudgeEval {
  std::vector<bool> predicted;
  std::vector<bool> gold;
};

// --- Caption / video gates ---------------------------------------------------

enum class CaptionScoreKind { kVir, kIta, kBoth };

// Keep rule: selected score(s) >= 3, refusals (-1) fail the gate, and a "No"
// judgement removes regardless of score. A missing judgement keeps the
// decision on the scores alone.
inline bool caption_keep_decision(const CaptionRecord& r, CaptionScoreKind kind) {
  if (r.yes_no_judge == YesNoJudge::kNo) return false;
  auto pass = [](int s) { return s >= 3; };  // -1 fails
  switch (kind) {
    case CaptionScoreKind::kVir: return pass(r.vir_score);
    case CaptionScoreKind::kIta: return pass(r.ita_score);
    case CaptionScoreKind::kBoth: return pass(r.vir_score) && pass(r.ita_score);
  }
  return false;
}

inline std::vector<CaptionRecord> filter_captions(
    const std::vector<CaptionRecord>& records,
    CaptionScoreKind kind = CaptionScoreKind::kBoth) {
  std::vector<CaptionRecord> kept;
  for (const auto& r : records) {
    if (caption_keep_decision(r, kind)) kept.push_back(r);
  }
  return kept;
}

inline bool video_keep_decision(const VideoRecord& r) {
  return r.alignment >= 5 && r.richness >= 5 && r.difficulty >= 3;
}

inline std::vector<VideoRecord> filter_videos(const std::vector<VideoRecord>& records) {
  std::vector<VideoRecord> kept;
  for (const auto& r : records) {
    if (video_keep_decision(r)) kept.push_back(r);
  }
  return kept;
}

// --- Judge metrics -----------------------------------------------------------

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

inline PrecisionRecall judge_metrics(const JudgeEval& eval) {
  if (eval.predicted.size() != eval.gold.size()) {
    throw InvalidInputError("judge_metrics: predicted/gold length mismatch");
  }
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < eval.predicted.size(); ++i) {
    if (eval.predicted[i] && eval.gold[i]) ++tp;
    if (eval.predicted[i] && !eval.gold[i]) ++fp;
    if (!eval.predicted[i] && eval.gold[i]) ++fn;
  }
  if (tp + fp == 0) throw UndefinedMetricError("precision");
  if (tp + fn == 0) throw UndefinedMetricError("recall");
  PrecisionRecall pr;
  pr.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  pr.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

// --- Dataset-level resampling ------------------------------------------------

struct DatasetSpec {
  std::string name;
  std::uint64_t size = 0;
  double weight = 0.0;
};

namespace detail {

// Largest-remainder apportionment of `total` over non-negative weights.
// Ties on the fractional part go to the lower index.
inline std::vector<std::uint64_t> largest_remainder(
    std::uint64_t total, const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<std::uint64_t> counts(n, 0);
  if (wsum <= 0.0 || total == 0) return counts;
  std::vector<double> frac(n, 0.0);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double quota = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::uint64_t>(std::floor(quota));
    frac[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return frac[a] > frac[b];
  });
  for (std::size_t i = 0; assigned < total && i < n; ++i) {
    counts[order[i]] += 1;
    ++assigned;
  }
  // Guard against accumulated float error leaving a unit unassigned.
  for (std::size_t i = 0; assigned < total; i = (i + 1) % n) {
    counts[i] += 1;
    ++assigned;
  }
  return counts;
}

}  // namespace detail

// Draw counts proportional to target weights, capped at each dataset's size
// with the overflow redistributed proportionally among the uncapped ones.
// Sum of counts is min(total, sum of sizes). The seed parameter is accepted
// for interface uniformity; apportionment itself is deterministic arithmetic.
inline std::vector<std::uint64_t> dataset_resample(
    const std::vector<DatasetSpec>& datasets, std::uint64_t total,
    std::uint64_t /*seed*/ = 0) {
  const std::size_t n = datasets.size();
  if (n == 0) return {};
  double wsum = 0.0;
  std::uint64_t size_sum = 0;
  for (const auto& d : datasets) {
    if (d.weight < 0.0) throw ConfigError("dataset_resample: negative weight for " + d.name);
    wsum += d.weight;
    size_sum += d.size;
  }
  if (wsum <= 0.0) throw ConfigError("dataset_resample: all weights are zero");
  std::uint64_t remaining = std::min(total, size_sum);

  std::vector<std::uint64_t> counts(n, 0);
  std::vector<bool> capped(n, false);
  while (remaining > 0) {
    std::vector<double> w(n, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!capped[i]) {
        w[i] = datasets[i].weight;
        if (w[i] > 0.0) any = true;
      }
    }
    if (!any) {
      // Only zero-weight datasets have room left; spread arrivals evenly.
      for (std::size_t i = 0; i < n && remaining > 0; ++i) {
        if (capped[i]) continue;
        const std::uint64_t room = datasets[i].size - counts[i];
        const std::uint64_t take = std::min(room, remaining);
        counts[i] += take;
        remaining -= take;
      }
      break;
    }
    const std::vector<std::uint64_t> share = detail::largest_remainder(remaining, w);
    std::uint64_t placed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (capped[i]) continue;
      const std::uint64_t room = datasets[i].size - counts[i];
      const std::uint64_t take = std::min(share[i], room);
      counts[i] += take;
      placed += take;
      if (counts[i] >= datasets[i].size) capped[i] = true;
    }
    remaining -= placed;
    if (placed == 0) break;  // no progress; all feasible room consumed
  }
  return counts;
}

// --- n-gram document-frequency capping ----------------------------------------

struct NgramRecord {
  std::string id;
  std::vector<std::string> tokens;
};

struct NgramResampleResult {
  std::vector<std::string> kept_ids;       // original order
  std::vector<std::string> dropped_ids;    // drop order
  std::uint64_t df_cap = 0;
};

namespace detail {

inline std::vector<std::string> record_ngrams(const std::vector<std::string>& tokens,
                                              std::size_t n) {
  std::vector<std::string> grams;
  if (n == 0 || tokens.size() < n) return grams;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g;
    for (std::size_t j = 0; j < n; ++j) {
      if (j > 0) g += '\x1f';
      g += tokens[i + j];
    }
    grams.push_back(std::move(g));
  }
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

}  // namespace detail

// Rebalances a corpus at the n-gram level by capping document frequency:
// a record's overrepresentation score is the mean, over its distinct
// n-grams, of df / max_df on the original corpus; the highest scorers are
// dropped (ties drop the later record) until every n-gram's document
// frequency is at most ceil(cap_percentile * N). With a duplicate-only
// corpus this leaves exactly ceil(cap_percentile * N) survivors.
inline NgramResampleResult ngram_resample(const std::vector<NgramRecord>& records,
                                          std::size_t n, double cap_percentile,
                                          std::uint64_t /*seed*/ = 0) {
  if (n < 1) throw ConfigError("ngram_resample: n must be >= 1");
  if (!(cap_percentile > 0.0) || cap_percentile > 1.0) {
    throw ConfigError("ngram_resample: cap_percentile must be in (0, 1]");
  }
  NgramResampleResult res;
  const std::size_t count = records.size();
  if (count == 0) return res;

  std::vector<std::vector<std::string>> grams(count);
  std::unordered_map<std::string, std::uint64_t> df;
  for (std::size_t i = 0; i < count; ++i) {
    grams[i] = detail::record_ngrams(records[i].tokens, n);
    for (const auto& g : grams[i]) df[g] += 1;
  }
  res.df_cap = static_cast<std::uint64_t>(
      std::ceil(cap_percentile * static_cast<double>(count)));
  if (res.df_cap < 1) res.df_cap = 1;

  std::uint64_t max_df = 0;
  for (const auto& [g, c] : df) max_df = std::max(max_df, c);

  std::vector<double> score(count, 0.0);
  if (max_df > 0) {
    for (std::size_t i = 0; i < count; ++i) {
      if (grams[i].empty()) continue;
      double s = 0.0;
      for (const auto& g : grams[i]) s += static_cast<double>(df.at(g));
      score[i] = s / (static_cast<double>(grams[i].size()) * static_cast<double>(max_df));
    }
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a > b;  // among equals, later records drop first
  });

  std::vector<bool> dropped(count, false);
  std::uint64_t violations = 0;
  for (const auto& [g, c] : df) {
    if (c > res.df_cap) ++violations;
  }
  for (std::size_t pos = 0; pos < count && violations > 0; ++pos) {
    const std::size_t i = order[pos];
    bool offending = false;
    for (const auto& g : grams[i]) {
      if (df.at(g) > res.df_cap) {
        offending = true;
        break;
      }
    }
    if (!offending) continue;
    dropped[i] = true;
    res.dropped_ids.push_back(records[i].id);
    for (const auto& g : grams[i]) {
      auto& c = df.at(g);
      if (c > res.df_cap && c - 1 <= res.df_cap) --violations;
      c -= 1;
    }
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!dropped[i]) res.kept_ids.push_back(records[i].id);
  }
  return res;
}

// --- pass@k difficulty gates ---------------------------------------------------

inline double pass_at_k(const AttemptRecord& rec) {
  if (rec.attempts.empty()) throw InvalidInputError("pass_at_k: empty attempts");
  std::size_t c = 0;
  for (bool b : rec.attempts) c += b ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(rec.attempts.size());
}

// Reasoning-heavy records must be neither trivially solved nor hopeless;
// other records only drop the perfect-score ones. Comparisons are on the
// integer success count, so the boundaries are exact.
inline bool difficulty_keep_decision(const AttemptRecord& rec) {
  std::size_t c = 0;
  for (bool b : rec.attempts) c += b ? 1 : 0;
  const std::size_t k = rec.attempts.size();
  if (rec.reasoning_heavy) return c > 0 && c < k;
  return c < k;
}

inline std::vector<AttemptRecord> difficulty_filter(
    const std::vector<AttemptRecord>& records) {
  std::vector<AttemptRecord> kept;
  for (const auto& r : records) {
    if (r.attempts.empty()) throw InvalidInputError("difficulty_filter: empty attempts for " + r.id);
    if (difficulty_keep_decision(r)) kept.push_back(r);
  }
  return kept;
}

// --- Chain-of-thought format -----------------------------------------------------

namespace detail {

inline std::size_t count_occurrences(const std::string& text, const std::string& pat) {
  std::size_t n = 0;
  for (std::size_t at = text.find(pat); at != std::string::npos;
       at = text.find(pat, at + pat.size())) {
    ++n;
  }
  return n;
}

// Returns [start, end) of the balanced payload after "\boxed{" at `open`,
// or npos if the braces never close.
inline std::size_t balanced_brace_end(const std::string& text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}') {
      --depth;
      if (depth == 0) return i;
    }
  }
  return std::string::npos;
}

}  // namespace detail

// True iff the text contains exactly one well-nested <think>...</think>
// block followed, after the block, by at least one \boxed{...} whose braces
// balance. Total predicate: malformed input returns false, never throws.
inline bool validate_cot_format(const std::string& text) {
  static const std::string kOpen = "<think>";
  static const std::string kClose = "</think>";
  if (detail::count_occurrences(text, kOpen) != 1) return false;
  if (detail::count_occurrences(text, kClose) != 1) return false;
  const std::size_t open = text.find(kOpen);
  const std::size_t close = text.find(kClose);
  if (close < open) return false;
  const std::size_t after = close + kClose.size();
  static const std::string kBoxed = "\\boxed{";
  for (std::size_t at = text.find(kBoxed, after); at != std::string::npos;
       at = text.find(kBoxed, at + kBoxed.size())) {
    if (detail::balanced_brace_end(text, at + kBoxed.size() - 1) != std::string::npos) {
      return true;
    }
  }
  return false;
}

// Payload of the last \boxed{...} with balanced braces, if any.
inline std::optional<std::string> extract_last_boxed(const std::string& text) {
  static const std::string kBoxed = "\\boxed{";
  std::optional<std::string> found;
  for (std::size_t at = text.find(kBoxed); at != std::string::npos;
       at = text.find(kBoxed, at + kBoxed.size())) {
    const std::size_t open = at + kBoxed.size() - 1;
    const std::size_t end = detail::balanced_brace_end(text, open);
    if (end != std::string::npos) {
      found = text.substr(open + 1, end - open - 1);
    }
  }
  return found;
}

// Contents of the single <think>...</think> block when the text has exactly
// one of each tag in order.
inline std::optional<std::string> extract_think_block(const std::string& text) {
  static const std::string kOpen = "<think>";
  static const std::string kClose = "</think>";
  if (detail::count_occurrences(text, kOpen) != 1) return std::nullopt;
  if (detail::count_occurrences(text, kClose) != 1) return std::nullopt;
  const std::size_t open = text.find(kOpen);
  const std::size_t close = text.find(kClose);
  if (close < open) return std::nullopt;
  const std::size_t start = open + kOpen.size();
  return text.substr(start, close - start);
}

// --- Dedup, redundancy, length balance -------------------------------------------

// First occurrence of each (image_key, normalized question) pair wins.
inline std::vector<CotRecord> dedup_cot(const std::vector<CotRecord>& records) {
  std::vector<CotRecord> kept;
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    const std::string key = r.image_key + '\x1f' + normalize_text(r.question);
    if (seen.insert(key).second) kept.push_back(r);
  }
  return kept;
}

inline constexpr double kDefaultRedundancyTheta = 0.6;

// Whitespace-token multiset overlap between think and answer, normalized by
// the answer's token count.
inline double redundancy_score(const CotRecord& rec) {
  if (rec.record_kind != RecordKind::kCot) {
    throw InvalidInputError("redundancy_score: record " + rec.id + " is not CoT");
  }
  const auto answer = whitespace_tokens(rec.answer_text);
  if (answer.empty()) throw UndefinedMetricError("redundancy_score");
  const auto think = whitespace_tokens(rec.think_text);
  std::unordered_map<std::string, std::uint64_t> think_counts;
  for (auto t : think) think_counts[std::string(t)] += 1;
  std::uint64_t inter = 0;
  for (auto t : answer) {
    auto it = think_counts.find(std::string(t));
    if (it != think_counts.end() && it->second > 0) {
      ++inter;
      it->second -= 1;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(answer.size());
}

// Drops CoT records whose think/answer overlap reaches theta; Direct records
// pass through untouched.
inline std::vector<CotRecord> filter_redundant(const std::vector<CotRecord>& records,
                                               double theta = kDefaultRedundancyTheta) {
  std::vector<CotRecord> kept;
  for (const auto& r : records) {
    if (r.record_kind == RecordKind::kCot && redundancy_score(r) >= theta) continue;
    kept.push_back(r);
  }
  return kept;
}

// Equal-width histogram over cot_token_len; every non-empty bin is
// downsampled without replacement to the smallest non-empty bin's count.
// Survivors keep their original relative order.
inline std::vector<CotRecord> length_balance(const std::vector<CotRecord>& records,
                                             int n_bins, std::uint64_t seed) {
  if (n_bins < 1) throw ConfigError("length_balance: n_bins must be >= 1");
  if (records.empty()) return {};
  std::uint64_t lo = records[0].cot_token_len, hi = records[0].cot_token_len;
  for (const auto& r : records) {
    lo = std::min(lo, r.cot_token_len);
    hi = std::max(hi, r.cot_token_len);
  }
  if (lo == hi || n_bins == 1) return records;  // single bin, identity

  const double width = static_cast<double>(hi - lo) / static_cast<double>(n_bins);
  auto bin_of = [&](std::uint64_t len) {
    const int b = static_cast<int>(static_cast<double>(len - lo) / width);
    return std::min(b, n_bins - 1);
  };
  std::vector<std::vector<std::size_t>> bins(n_bins);
  for (std::size_t i = 0; i < records.size(); ++i) {
    bins[bin_of(records[i].cot_token_len)].push_back(i);
  }
  std::size_t min_count = std::numeric_limits<std::size_t>::max();
  for (const auto& b : bins) {
    if (!b.empty()) min_count = std::min(min_count, b.size());
  }
  Rng rng(seed);
  std::vector<bool> keep(records.size(), false);
  for (const auto& b : bins) {
    if (b.empty()) continue;
    const std::vector<std::size_t> picks = rng.sample_indices(b.size(), min_count);
    for (std::size_t p : picks) keep[b[p]] = true;
  }
  std::vector<CotRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

// --- Loss masks ----------------------------------------------------------------

struct LossMask {
  std::vector<bool> active;  // true where the token contributes to the loss
  std::size_t instruction_len = 0;
  std::size_t think_len = 0;
  std::size_t answer_len = 0;
  bool empty_answer = false;
};

// Serialization order is instruction, then think (CoT only), then answer.
// Direct records train on the answer span only; CoT records train on
// think-plus-answer. Instruction tokens never carry loss.
inline LossMask loss_mask_from_lens(RecordKind kind, std::size_t instruction_len,
                                    std::size_t think_len, std::size_t answer_len) {
  if (kind == RecordKind::kCot && think_len == 0) {
    throw InvalidInputError("loss_mask: CoT record with empty think span");
  }
  LossMask m;
  m.instruction_len = instruction_len;
  m.think_len = (kind == RecordKind::kCot) ? think_len : 0;
  m.answer_len = answer_len;
  m.empty_answer = (answer_len == 0);
  m.active.assign(instruction_len, false);
  m.active.insert(m.active.end(), m.think_len, true);
  m.active.insert(m.active.end(), answer_len, true);
  return m;
}

inline LossMask loss_mask(const CotRecord& rec) {
  validate_cot_record(rec);
  const std::size_t i_len = whitespace_tokens(rec.question).size();
  const std::size_t t_len = whitespace_tokens(rec.think_text).size();
  const std::size_t a_len = whitespace_tokens(rec.answer_text).size();
  return loss_mask_from_lens(rec.record_kind, i_len, t_len, a_len);
}

// --- Embedding clustering (bucket-uniform sampling) ------------------------------

// Lloyd's iterations with seeded initial centers drawn from the points.
// Deterministic: ties in distance go to the lower center index.
inline std::vector<int> kmeans_labels(const std::vector<std::vector<double>>& points,
                                      int k, int iterations, std::uint64_t seed) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  const std::size_t n = points.size();
  if (n == 0) return {};
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw InvalidInputError("kmeans: inconsistent point dims");
  }
  const int kk = std::min<std::size_t>(k, n);
  Rng rng(seed);
  const std::vector<std::size_t> init = rng.sample_indices(n, kk);
  std::vector<std::vector<double>> centers;
  for (std::size_t idx : init) centers.push_back(points[idx]);

  std::vector<int> labels(n, 0);
  auto dist2 = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      s += d * d;
    }
    return s;
  };
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = dist2(points[i], centers[0]);
      for (int c = 1; c < kk; ++c) {
        const double d = dist2(points[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    std::vector<std::vector<double>> sums(kk, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      counts[labels[i]] += 1;
      for (std::size_t d = 0; d < dim; ++d) sums[labels[i]][d] += points[i][d];
    }
    for (int c = 0; c < kk; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t d = 0; d < dim; ++d) {
        centers[c][d] = sums[c][d] / static_cast<double>(counts[c]);
      }
    }
    if (!changed) break;
  }
  return labels;
}

// Uniform without-replacement draw of up to per_bucket members from each
// cluster; result is sorted ascending for stable downstream iteration.
inline std::vector<std::size_t> bucket_uniform_sample(const std::vector<int>& labels,
                                                      std::size_t per_bucket,
                                                      std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < labels.size(); ++i) buckets[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& [label, members] : buckets) {
    const std::size_t take = std::min(per_bucket, members.size());
    for (std::size_t p : rng.sample_indices(members.size(), take)) {
      out.push_back(members[p]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace trainops::curation

#endif  // TRAINOPS_CURATION_HPP_
