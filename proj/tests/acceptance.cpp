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

// Acceptance gate. Each test case checks one release criterion end to end
// and prints exactly one [PASS]/[FAIL] line; ctest registers every case as
// its own entry via the [criterionN] tag.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "oracles.hpp"
#include "testutil.hpp"
#include "trainops/adalrs.hpp"
#include "trainops/curation.hpp"
#include "trainops/landscape.hpp"
#include "trainops/moe.hpp"
#include "trainops/packing.hpp"
#include "trainops/rewards.hpp"
#include "trainops/rng.hpp"
#include "trainops/soup.hpp"
#include "trainops/textio.hpp"

namespace al = trainops::adalrs;
namespace pk = trainops::packing;
namespace cu = trainops::curation;
namespace rw = trainops::rewards;
namespace sp = trainops::soup;
namespace me = trainops::moe;

namespace {

// Prints the per-criterion verdict line when the test case body finishes,
// whether it ran to completion or unwound through a failed REQUIRE.
struct Criterion {
  Criterion(int n, const char* label) : n_(n), label_(label) {}
  ~Criterion() {
    const bool pass = ok_ && std::uncaught_exceptions() == 0;
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", n_, label_);
    std::fflush(stdout);
  }
  void expect(bool c) { ok_ = ok_ && c; }

 private:
  int n_;
  const char* label_;
  bool ok_ = true;
};

#define ACCEPT(crit, ...)                                      \
  do {                                                         \
    (crit).expect(static_cast<bool>(__VA_ARGS__));             \
    CHECK(__VA_ARGS__);                                        \
  } while (0)

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr const char* kCli = TRAINOPS_CLI_PATH;

al::SyntheticLossLandscape quadratic_landscape(std::uint64_t seed, double condition,
                                               double noise_sigma) {
  al::LandscapeConfig lc;
  lc.kind = al::LandscapeKind::kQuadratic;
  lc.dim = 8;
  lc.condition = condition;
  lc.noise_sigma = noise_sigma;
  lc.seed = seed;
  return al::SyntheticLossLandscape(lc);
}

pk::SampleMeta text_sample(const std::string& id, std::uint64_t tokens) {
  pk::SampleMeta s;
  s.id = id;
  s.text_tokens = tokens;
  s.modality = pk::Modality::kTextOnly;
  return s;
}

std::size_t nonempty_streams(const pk::MicroBatchPlan& plan) {
  std::size_t n = 0;
  for (const auto& dev : plan.device_batches) {
    for (const auto& st : dev) {
      if (!st.segments.empty()) ++n;
    }
  }
  return n;
}

}  // namespace

TEST_CASE("lr search beats its tenth-of-optimal start and lands near the optimum",
          "[criterion1]") {
  Criterion crit(1, "lr search ordering and terminal bracket on a seeded quadratic");
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = 11;
  // Gradient noise keeps the finite-horizon optimum interior to the grid.
  const al::SyntheticLossLandscape landscape = quadratic_landscape(seed, 2.0, 0.02);
  const int steps = 400;

  // Brute-force optimal fixed lr over a log grid.
  double eta_star = 0.0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 64; ++i) {
    const double lr = 3e-3 * std::pow(100.0, static_cast<double>(i) / 63.0);
    const al::Trajectory t = al::run_fixed_lr(landscape, lr, steps, seed);
    if (t.diverged || !(t.final_loss < best_loss)) continue;
    best_loss = t.final_loss;
    eta_star = lr;
  }
  REQUIRE(eta_star > 0.0);

  const al::Trajectory baseline = al::run_fixed_lr(landscape, eta_star / 10.0, steps, seed);

  al::AdaLrsConfig cfg;
  cfg.alpha = 3;
  cfg.beta = 2;
  cfg.lambda = 0.8;
  cfg.window_k = 4;
  cfg.initial_lr = eta_star / 10.0;
  cfg.max_adjustments = 12;
  const al::Trajectory searched = al::run_synthetic_trial(landscape, cfg, steps, seed);

  CAPTURE(eta_star, best_loss, searched.final_lr, searched.final_loss, baseline.final_loss);
  ACCEPT(crit, !searched.diverged);
  ACCEPT(crit, searched.final_loss <= baseline.final_loss);
  ACCEPT(crit, searched.final_lr >= eta_star / 3.0);
  ACCEPT(crit, searched.final_lr <= 3.0 * eta_star);
  ACCEPT(crit, seconds_since(t0) < 5.0);
}

TEST_CASE("anchor run scales the lr from 2e-4 to 6.75e-4", "[criterion2]") {
  Criterion crit(2, "terminal lr 6.75e-4 from 2e-4 within 1e-12 relative");
  const al::SyntheticLossLandscape landscape = quadratic_landscape(7, 10.0, 0.0);

  al::AdaLrsConfig cfg;
  cfg.alpha = 2;
  cfg.beta = 3;
  cfg.lambda = 0.75;
  cfg.window_k = 4;
  cfg.slope_error_e = 1e-6;
  cfg.initial_lr = 2e-4;
  cfg.max_adjustments = 3;
  const al::Trajectory traj = al::run_synthetic_trial(landscape, cfg, 400, 7);

  std::size_t scale_ups = 0, rollbacks = 0;
  for (const auto& r : traj.records) {
    if (r.decision == al::DecisionKind::kScaleUp) ++scale_ups;
    if (r.decision == al::DecisionKind::kRollbackAndScaleDown) ++rollbacks;
  }
  CAPTURE(traj.final_lr, scale_ups, rollbacks);
  ACCEPT(crit, scale_ups == 3);
  ACCEPT(crit, rollbacks == 0);
  ACCEPT(crit, std::abs(traj.final_lr - 6.75e-4) <= 1e-12 * 6.75e-4);
  // Committed factors 2, 1.5, 1.125 are dyadic, so equality is exact.
  ACCEPT(crit, traj.final_lr == 6.75e-4);
}

TEST_CASE("randomized rollbacks restore the trainer byte-identically", "[criterion3]") {
  Criterion crit(3, "1000 randomized rollbacks, zero state mismatches");
  trainops::Rng rng(2026);
  int rollbacks = 0, mismatches = 0, trials = 0;
  while (rollbacks < 1000 && trials < 4000) {
    ++trials;
    al::LandscapeConfig lc;
    lc.kind = al::LandscapeKind::kQuadratic;
    lc.dim = 4 + static_cast<int>(rng.bounded(6));
    lc.condition = rng.uniform(2.0, 50.0);
    lc.noise_sigma = 0.1;
    lc.seed = rng.next_u64();
    const al::SyntheticLossLandscape landscape(lc);

    al::AdaLrsConfig cfg;
    cfg.alpha = 3;
    cfg.beta = 2;
    cfg.lambda = 0.9;
    cfg.window_k = 4;
    cfg.slope_error_e = 0.0;  // any slowdown triggers a rollback
    cfg.initial_lr = rng.uniform(0.05, 0.6);
    cfg.max_adjustments = 6;

    al::SyntheticTrainer trainer(landscape, rng.next_u64());
    al::AdaLrsState state = al::AdaLrsState::init(cfg);
    std::string at_snapshot;
    for (int i = 0; i < 160; ++i) {
      const double loss = trainer.loss();
      if (!std::isfinite(loss) || loss > al::kDivergenceGuard) break;
      const al::Phase before = state.phase;
      const al::Decision d = al::adalrs_step(state, cfg, loss, trainer);
      if (before == al::Phase::kProbing && state.phase == al::Phase::kTrialUp) {
        at_snapshot = trainer.serialize_state();
      }
      if (d.kind == al::DecisionKind::kRollbackAndScaleDown) {
        ++rollbacks;
        if (trainer.serialize_state() != at_snapshot) ++mismatches;
      }
      trainer.sgd_step(d.lr_after);
    }
  }
  CAPTURE(rollbacks, mismatches, trials);
  ACCEPT(crit, rollbacks >= 1000);
  ACCEPT(crit, mismatches == 0);
}

TEST_CASE("packing beats per-sample batching and tracks the optimum", "[criterion4]") {
  Criterion crit(4, "corpus padding < 0.05 vs baseline > 0.30; FFD within slack of optimum");
  const auto t0 = std::chrono::steady_clock::now();

  const auto corpus = testutil::lognormal_corpus(100000, 6.0, 1.0, 8192, 99);
  pk::PackerConfig cfg;
  cfg.l_max = 8192;
  cfg.n_devices = 8;
  cfg.streams_per_device = 16;
  cfg.a_max = 200;  // static drain: nothing may hit the forcing bound

  ACCEPT(crit, pk::padded_baseline_ratio(corpus, cfg.l_max) > 0.30);

  pk::SampleBuffer buffer;
  for (const auto& s : corpus) buffer.insert(s);
  std::uint64_t cap_sum = 0, used_sum = 0;
  int rounds = 0;
  while (!buffer.empty()) {
    const pk::MicroBatchPlan plan = pk::pack_round(buffer, cfg);
    for (const auto& dev : plan.device_batches) {
      for (const auto& st : dev) {
        cap_sum += st.capacity;
        used_sum += st.used_tokens;
      }
    }
    ++rounds;
    REQUIRE(rounds < 1000);
  }
  const double overall_padding =
      static_cast<double>(cap_sum - used_sum) / static_cast<double>(cap_sum);
  const double elapsed = seconds_since(t0);
  CAPTURE(overall_padding, rounds, elapsed);
  ACCEPT(crit, overall_padding < 0.05);
  ACCEPT(crit, elapsed < 10.0);

  // Exhaustive sweep of every size multiset over {1..6}, n <= 10, capacity 6,
  // at most 3 streams; FFD output compared against the brute-force optimum.
  pk::PackerConfig small;
  small.l_max = 6;
  small.n_devices = 1;
  small.streams_per_device = 3;
  std::size_t instances = 0, scheduled_all = 0, leftover_cases = 0;
  bool bounds_ok = true;
  std::vector<std::uint64_t> sizes;
  auto run_instance = [&] {
    ++instances;
    std::vector<pk::SampleMeta> samples;
    std::unordered_map<std::string, std::uint64_t> size_of;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      const std::string id = "i" + std::to_string(i);
      auto s = text_sample(id, sizes[i]);
      s.arrival_seq = i;
      samples.push_back(std::move(s));
      size_of[id] = sizes[i];
    }
    const pk::MicroBatchPlan plan =
        pk::pack_samples(samples, small, pk::AssignmentPolicy::kArrivalOrder);
    const std::size_t k_ffd = nonempty_streams(plan);
    const double padding = pk::padding_ratio(plan);
    if (plan.leftover_buffer.empty()) {
      ++scheduled_all;
      const int k_opt = oracles::min_bins(sizes, small.l_max);
      const int k_bound = (11 * k_opt + 6) / 9;
      std::uint64_t total = 0;
      for (auto v : sizes) total += v;
      const double cap_bound = static_cast<double>(k_bound) * 6.0;
      const double padding_bound = (cap_bound - static_cast<double>(total)) / cap_bound;
      bool ok = static_cast<int>(k_ffd) <= k_bound;
      ok = ok && padding <= padding_bound + 1e-15;
      ok = ok && padding >= oracles::min_padding_ratio(sizes, small.l_max) - 1e-15;
      if (k_opt == 1) ok = ok && k_ffd == 1;
      bounds_ok = bounds_ok && ok;
    } else {
      ++leftover_cases;
      std::uint64_t s_min = small.l_max;
      for (const auto& id : plan.leftover_buffer) s_min = std::min(s_min, size_of.at(id));
      bool ok = k_ffd == 3;  // every slot in use before anything is left behind
      for (const auto& dev : plan.device_batches) {
        for (const auto& st : dev) {
          if (!st.segments.empty()) ok = ok && (st.capacity - st.used_tokens) < s_min;
        }
      }
      ok = ok && padding <= static_cast<double>(s_min - 1) / 6.0 + 1e-15;
      bounds_ok = bounds_ok && ok;
    }
  };
  auto enumerate = [&](auto&& self, std::uint64_t lo) -> void {
    if (!sizes.empty()) run_instance();
    if (sizes.size() == 10) return;
    for (std::uint64_t s = lo; s <= 6; ++s) {
      sizes.push_back(s);
      self(self, s);
      sizes.pop_back();
    }
  };
  enumerate(enumerate, 1);
  CAPTURE(instances, scheduled_all, leftover_cases);
  ACCEPT(crit, bounds_ok);
  ACCEPT(crit, instances == 8007);
  ACCEPT(crit, scheduled_all > 500);
  ACCEPT(crit, leftover_cases > 500);
}

TEST_CASE("balanced assignment tightens visual spread; nothing starves", "[criterion5]") {
  Criterion crit(5, "balanced visual spread <= 0.25x arrival order; zero age overruns");
  const auto corpus = testutil::lognormal_corpus(100000, 6.0, 1.0, 8192, 99);
  pk::PackerConfig cfg;
  cfg.l_max = 8192;
  cfg.n_devices = 8;
  cfg.streams_per_device = 16;
  cfg.a_max = 4;

  // Streamed drain: inflow slightly above per-round capacity so a backlog
  // forms and the age bound is actually exercised.
  pk::SampleBuffer buffer;
  std::size_t next = 0;
  std::uint64_t worst_age = 0;
  bool spread_checked = false;
  std::uint64_t spread_balanced = 0, spread_arrival = 0;
  int round = 0;
  while (next < corpus.size() || !buffer.empty()) {
    for (int i = 0; i < 1600 && next < corpus.size(); ++i) buffer.insert(corpus[next++]);
    worst_age = std::max<std::uint64_t>(worst_age, buffer.max_age());
    if (round == 30) {
      const auto snapshot = buffer.snapshot();
      spread_balanced = pk::visual_spread(
          pk::pack_samples(snapshot, cfg, pk::AssignmentPolicy::kBalanced));
      spread_arrival = pk::visual_spread(
          pk::pack_samples(snapshot, cfg, pk::AssignmentPolicy::kArrivalOrder));
      spread_checked = true;
    }
    pk::pack_round(buffer, cfg);
    ++round;
    REQUIRE(round < 1000);
  }
  CAPTURE(worst_age, spread_balanced, spread_arrival, round);
  ACCEPT(crit, worst_age <= cfg.a_max);
  ACCEPT(crit, spread_checked);
  ACCEPT(crit, spread_arrival > 0);
  ACCEPT(crit, static_cast<double>(spread_balanced) <=
                   0.25 * static_cast<double>(spread_arrival));
}

TEST_CASE("boundary fixture reproduces every keep rule", "[criterion6]") {
  Criterion crit(6, "200-record boundary fixture, zero gate deviations");

  // Captions: full cross of both score axes and the judge verdict.
  const std::vector<int> score_values = {-1, 1, 2, 3, 4, 5};
  const std::vector<cu::YesNoJudge> judges = {
      cu::YesNoJudge::kYes, cu::YesNoJudge::kNo, cu::YesNoJudge::kMissing};
  std::vector<cu::CaptionRecord> captions;
  for (int vir : score_values) {
    for (int ita : score_values) {
      for (auto judge : judges) {
        cu::CaptionRecord r;
        r.id = "c" + std::to_string(captions.size());
        r.vir_score = vir;
        r.ita_score = ita;
        r.yes_no_judge = judge;
        captions.push_back(std::move(r));
      }
    }
  }

  // Videos: boundary values around each threshold, cycled to 82 records so
  // the fixture totals exactly 200 with the attempt block below.
  const std::vector<int> align_values = {-1, 4, 5, 10};
  const std::vector<int> rich_values = {-1, 4, 5, 7};
  const std::vector<int> diff_values = {-1, 2, 3, 8};
  std::vector<cu::VideoRecord> videos;
  for (int i = 0; i < 82; ++i) {
    cu::VideoRecord r;
    r.id = "v" + std::to_string(i);
    r.alignment = align_values[i % 4];
    r.richness = rich_values[(i / 4) % 4];
    r.difficulty = diff_values[(i / 16) % 4];
    videos.push_back(std::move(r));
  }

  std::vector<cu::AttemptRecord> attempts;
  for (int reasoning = 0; reasoning < 2; ++reasoning) {
    for (int c = 0; c <= 4; ++c) {
      cu::AttemptRecord r;
      r.id = "a" + std::to_string(attempts.size());
      for (int i = 0; i < 4; ++i) r.attempts.push_back(i < c);
      r.reasoning_heavy = reasoning == 1;
      attempts.push_back(std::move(r));
    }
  }
  REQUIRE(captions.size() + videos.size() + attempts.size() == 200);

  int deviations = 0;
  for (auto kind : {cu::CaptionScoreKind::kVir, cu::CaptionScoreKind::kIta,
                    cu::CaptionScoreKind::kBoth}) {
    std::unordered_set<std::string> kept;
    for (const auto& r : cu::filter_captions(captions, kind)) kept.insert(r.id);
    for (const auto& r : captions) {
      bool want = r.yes_no_judge != cu::YesNoJudge::kNo;
      const bool vir_ok = r.vir_score >= 3, ita_ok = r.ita_score >= 3;
      if (kind == cu::CaptionScoreKind::kVir) want = want && vir_ok;
      if (kind == cu::CaptionScoreKind::kIta) want = want && ita_ok;
      if (kind == cu::CaptionScoreKind::kBoth) want = want && vir_ok && ita_ok;
      if (want != (kept.count(r.id) > 0)) ++deviations;
    }
  }

  std::unordered_set<std::string> video_kept;
  for (const auto& r : cu::filter_videos(videos)) video_kept.insert(r.id);
  for (const auto& r : videos) {
    const bool want = r.alignment >= 5 && r.richness >= 5 && r.difficulty >= 3;
    if (want != (video_kept.count(r.id) > 0)) ++deviations;
  }

  std::unordered_set<std::string> attempt_kept;
  for (const auto& r : cu::difficulty_filter(attempts)) attempt_kept.insert(r.id);
  int reasoning_deviations = 0;
  for (const auto& r : attempts) {
    int c = 0;
    for (bool b : r.attempts) c += b ? 1 : 0;
    const bool want = r.reasoning_heavy ? (c > 0 && c < 4) : (c < 4);
    if (want != (attempt_kept.count(r.id) > 0)) ++deviations;
    // Removed reasoning records are exactly those with pass@4 in {0, 1}.
    if (r.reasoning_heavy) {
      const bool removed = attempt_kept.count(r.id) == 0;
      if (removed != (c == 0 || c == 4)) ++reasoning_deviations;
    }
  }
  CAPTURE(deviations, reasoning_deviations);
  ACCEPT(crit, deviations == 0);
  ACCEPT(crit, reasoning_deviations == 0);
}

TEST_CASE("judge metrics match the closed forms", "[criterion7]") {
  Criterion crit(7, "precision/recall within 1e-12 of closed form; report fixtures render");
  auto build = [](int tp, int fp, int fn, int tn) {
    cu::JudgeEval e;
    for (int i = 0; i < tp; ++i) { e.predicted.push_back(true); e.gold.push_back(true); }
    for (int i = 0; i < fp; ++i) { e.predicted.push_back(true); e.gold.push_back(false); }
    for (int i = 0; i < fn; ++i) { e.predicted.push_back(false); e.gold.push_back(true); }
    for (int i = 0; i < tn; ++i) { e.predicted.push_back(false); e.gold.push_back(false); }
    return e;
  };

  bool agree = true;
  for (int tp = 0; tp <= 8; ++tp) {
    for (int fp = 0; fp <= 8; ++fp) {
      for (int fn = 0; fn <= 8; ++fn) {
        if (tp + fp == 0 || tp + fn == 0) continue;
        const auto pr = cu::judge_metrics(build(tp, fp, fn, 2));
        const double want_p = static_cast<double>(tp) / (tp + fp);
        const double want_r = static_cast<double>(tp) / (tp + fn);
        agree = agree && std::abs(pr.precision - want_p) <= 1e-12;
        agree = agree && std::abs(pr.recall - want_r) <= 1e-12;
      }
    }
  }
  ACCEPT(crit, agree);

  // Published-looking values as rendering fixtures only.
  const auto fixture_p = cu::judge_metrics(build(229, 21, 50, 0));
  const auto fixture_r = cu::judge_metrics(build(903, 97, 97, 0));
  ACCEPT(crit, trainops::format_fixed(fixture_p.precision, 3) == "0.916");
  ACCEPT(crit, trainops::format_fixed(fixture_r.recall, 3) == "0.903");
}

TEST_CASE("mixed rewards stay bounded and monotone", "[criterion8]") {
  Criterion crit(8, "1e4 reward draws bounded/monotone; format gate matches validator");
  trainops::Rng rng(88);
  bool bounded = true, monotone = true;
  for (int trial = 0; trial < 10000; ++trial) {
    rw::RewardWeights w;
    double wa = rng.uniform(0.05, 1.0), wt = rng.uniform(0.05, 1.0), wf = rng.uniform(0.05, 1.0);
    const double sum = wa + wt + wf;
    w.w_answer = wa / sum;
    w.w_think = wt / sum;
    w.w_format = wf / sum;
    const int a = static_cast<int>(rng.bounded(2));
    const int t = static_cast<int>(rng.bounded(2));
    const int f = static_cast<int>(rng.bounded(2));
    const double r = rw::mixed_reward(a, t, f, w);
    bounded = bounded && r >= -1e-12 && r <= 1.0 + 1e-12;
    monotone = monotone && rw::mixed_reward(1, t, f, w) >= r - 1e-15;
    monotone = monotone && rw::mixed_reward(a, 1, f, w) >= r - 1e-15;
    monotone = monotone && rw::mixed_reward(a, t, 1, w) >= r - 1e-15;
  }
  ACCEPT(crit, bounded);
  ACCEPT(crit, monotone);

  const std::vector<std::string> pieces = {"<think>", "</think>", "\\boxed{", "}",
                                           "{",       "x",        " ",        "<think",
                                           "think>",  "\\boxed",  "$",        "42"};
  bool equivalent = true;
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const std::size_t n = 1 + rng.bounded(10);
    for (std::size_t i = 0; i < n; ++i) text += pieces[rng.bounded(pieces.size())];
    const int got = rw::format_reward(rw::parse_rollout(text));
    const int want = cu::validate_cot_format(text) ? 1 : 0;
    equivalent = equivalent && got == want;
  }
  ACCEPT(crit, equivalent);
}

TEST_CASE("soup merge equals the elementwise mean oracle", "[criterion9]") {
  Criterion crit(9, "merge matches mean oracle to the last bit; lineage gate rejects");
  trainops::Rng rng(77);
  bool exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const bool f64 = trial % 2 == 0;
    const std::size_t n_models = 2 + rng.bounded(3);
    const std::size_t n_tensors = 1 + rng.bounded(3);
    const std::size_t n_elems = 1 + rng.bounded(6);
    std::vector<sp::ParameterSet> models;
    for (std::size_t m = 0; m < n_models; ++m) {
      sp::ParameterSet ps;
      ps.lineage = "L";
      ps.step_count = rng.bounded(1000);
      for (std::size_t i = 0; i < n_tensors; ++i) {
        sp::Tensor t;
        t.name = "t" + std::to_string(i);
        t.shape = {n_elems};
        if (f64) {
          t.dtype = sp::DType::kF64;
          for (std::size_t e = 0; e < n_elems; ++e) t.f64.push_back(rng.gaussian() * 3.0);
        } else {
          t.dtype = sp::DType::kF32;
          for (std::size_t e = 0; e < n_elems; ++e) {
            t.f32.push_back(static_cast<float>(rng.gaussian() * 3.0));
          }
        }
        ps.tensors.emplace(t.name, std::move(t));
      }
      models.push_back(std::move(ps));
    }
    const sp::ParameterSet merged = sp::merge(models);
    for (const auto& [name, t] : merged.tensors) {
      for (std::size_t e = 0; e < n_elems; ++e) {
        if (f64) {
          std::vector<double> vals;
          for (const auto& m : models) vals.push_back(m.tensors.at(name).f64[e]);
          exact = exact && t.f64[e] == oracles::mean_f64(vals);
        } else {
          std::vector<float> vals;
          for (const auto& m : models) vals.push_back(m.tensors.at(name).f32[e]);
          exact = exact && t.f32[e] == oracles::mean_f32(vals);
        }
      }
    }
    if (trial == 0) {
      auto hetero = models;
      hetero[1].lineage = "M";
      ACCEPT(crit, !sp::check_homogeneous(hetero));
      CHECK_THROWS_AS(sp::merge(hetero), trainops::InvalidInputError);
      bool rejected = false;
      try {
        sp::merge(hetero);
      } catch (const trainops::InvalidInputError&) {
        rejected = true;
      }
      ACCEPT(crit, rejected);
    }
  }
  ACCEPT(crit, exact);
}

TEST_CASE("expert balance scores and mixture calibration", "[criterion10]") {
  Criterion crit(10, "uniform routing scores exactly 1; calibration beats the 0.05 grid");
  for (int experts : {4, 8}) {
    me::RoutingTrace t;
    t.n_experts = experts;
    for (int e = 0; e < experts; ++e) {
      t.gate_probs.push_back(std::vector<double>(experts, 1.0 / experts));
      t.topk_assignments.push_back({e});
    }
    const me::ExpertStats stats = me::average_across_ranks({t});
    ACCEPT(crit, me::load_balance_loss_from_stats(stats) == 1.0);
    ACCEPT(crit, me::activation_entropy(stats.assign_frac) == 1.0);
  }

  trainops::Rng rng(1010);
  auto random_usage = [&](std::size_t d, std::size_t experts) {
    std::vector<std::vector<double>> usage(d, std::vector<double>(experts));
    for (auto& row : usage) {
      double sum = 0.0;
      for (auto& v : row) {
        v = rng.uniform01() + 0.02;
        sum += v;
      }
      for (auto& v : row) v /= sum;
    }
    return usage;
  };

  bool grid_matched = true;
  for (int trial = 0; trial < 30; ++trial) {
    const auto usage = random_usage(3, 4 + 2 * rng.bounded(3));
    const me::MixtureWeights got = me::calibrate_mixture(usage, 10000);
    const double got_h = me::activation_entropy(me::blend_usage(usage, got.weights));
    const auto grid_w = oracles::best_grid_mixture(usage);
    const double grid_h = oracles::grid_mixture_entropy(usage, grid_w);
    grid_matched = grid_matched && got_h >= grid_h - 1e-9;
  }
  ACCEPT(crit, grid_matched);

  bool never_below_uniform = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.bounded(4);
    const auto usage = random_usage(d, 4 + rng.bounded(5));
    const me::MixtureWeights got = me::calibrate_mixture(usage, 4000);
    const std::vector<double> uniform(d, 1.0 / static_cast<double>(d));
    const double got_h = me::activation_entropy(me::blend_usage(usage, got.weights));
    const double uni_h = me::activation_entropy(me::blend_usage(usage, uniform));
    never_below_uniform = never_below_uniform && got_h >= uni_h - 1e-12;
  }
  ACCEPT(crit, never_below_uniform);
}

TEST_CASE("every CLI stage reruns byte-identically", "[criterion11]") {
  Criterion crit(11, "all stages rerun with identical config produce identical bytes");
  testutil::TempDir dir;

  testutil::write_file(dir.file("samples.txt"),
                       "s1, 6, 0, TextOnly\n"
                       "s2, 5, 0, TextOnly\n"
                       "s3, 4, 0, TextOnly\n"
                       "s4, 3, 0, TextOnly\n"
                       "s5, 2, 0, TextOnly\n");
  testutil::write_file(
      dir.file("caps.jsonl"),
      R"({"id":"k1","vir_score":3,"ita_score":5,"yes_no_judge":"Yes"})"
      "\n"
      R"({"id":"d1","vir_score":5,"ita_score":5,"yes_no_judge":"No"})"
      "\n");
  testutil::write_file(dir.file("vids.jsonl"),
                       R"({"id":"v1","alignment":7,"richness":6,"difficulty":5})"
                       "\n"
                       R"({"id":"v2","alignment":4,"richness":6,"difficulty":5})"
                       "\n");
  testutil::write_file(
      dir.file("cot.jsonl"),
      R"({"id":"c1","image_key":"h1","question":"Q1","think_text":"a b c","answer_text":"d","record_kind":"CoT","cot_token_len":3})"
      "\n"
      R"({"id":"c2","image_key":"h2","question":"Q2","think_text":"e f","answer_text":"g","record_kind":"CoT","cot_token_len":2})"
      "\n"
      R"({"id":"c3","image_key":"h3","question":"Q3","think_text":"h i j k","answer_text":"l","record_kind":"CoT","cot_token_len":4})"
      "\n"
      R"({"id":"c4","image_key":"h4","question":"Q4","think_text":"m","answer_text":"n","record_kind":"CoT","cot_token_len":1})"
      "\n");
  testutil::write_file(
      dir.file("attempts.jsonl"),
      R"({"id":"a1","attempts":[true,false,true,false],"reasoning_heavy":true})"
      "\n"
      R"({"id":"a2","attempts":[true,true,true,true],"reasoning_heavy":false})"
      "\n");
  testutil::write_file(dir.file("tokens.jsonl"),
                       R"({"id":"r0","tokens":["a","b","c"]})"
                       "\n"
                       R"({"id":"r1","tokens":["a","b","c"]})"
                       "\n"
                       R"({"id":"r2","tokens":["a","b","c"]})"
                       "\n");
  testutil::write_file(
      dir.file("rollouts.jsonl"),
      R"({"id":"g1","raw_text":"<think>w</think> \\boxed{3.50}","gold":"3.5","think_r":1})"
      "\n");
  testutil::write_file(dir.file("uniform.trace"),
                       "0, 0, [0], [0.25 0.25 0.25 0.25]\n"
                       "0, 1, [1], [0.25 0.25 0.25 0.25]\n"
                       "0, 2, [2], [0.25 0.25 0.25 0.25]\n"
                       "0, 3, [3], [0.25 0.25 0.25 0.25]\n");
  testutil::write_file(dir.file("d0.trace"),
                       "0, 0, [0], [1.0 0.0]\n"
                       "0, 1, [0], [1.0 0.0]\n");
  testutil::write_file(dir.file("d1.trace"),
                       "0, 0, [1], [0.0 1.0]\n"
                       "0, 1, [1], [0.0 1.0]\n");
  {
    sp::ParameterSet a, b;
    a.lineage = b.lineage = "L";
    a.step_count = 80;
    b.step_count = 120;
    sp::Tensor ta;
    ta.name = "w";
    ta.shape = {2};
    ta.f32 = {1.0f, 3.0f};
    sp::Tensor tb = ta;
    tb.f32 = {3.0f, 5.0f};
    a.tensors.emplace("w", std::move(ta));
    b.tensors.emplace("w", std::move(tb));
    sp::write_parameter_set(dir.file("a.soup"), a);
    sp::write_parameter_set(dir.file("b.soup"), b);
  }

  struct Stage {
    std::string name;
    std::string args;
    std::vector<std::string> outputs;
  };
  const std::vector<Stage> stages = {
      {"adalrs-sim",
       "adalrs-sim --alpha 2 --beta 3 --lambda 0.75 --window 4 --e 1e-6 --lr0 2e-4"
       " --max-adjustments 3 --steps 400 --seed 7 --out " + dir.file("traj.txt"),
       {dir.file("traj.txt")}},
      {"pack",
       "pack --lmax 10 --devices 1 --streams-per-device 2 --amax 4 --seed 3 --input " +
           dir.file("samples.txt") + " --out " + dir.file("plan.txt"),
       {dir.file("plan.txt")}},
      {"curate captions",
       "curate captions --in " + dir.file("caps.jsonl") + " --out " + dir.file("ck.jsonl"),
       {dir.file("ck.jsonl"), dir.file("ck.jsonl") + ".schema.json"}},
      {"curate videos",
       "curate videos --in " + dir.file("vids.jsonl") + " --out " + dir.file("vk.jsonl"),
       {dir.file("vk.jsonl"), dir.file("vk.jsonl") + ".schema.json"}},
      {"curate cot",
       "curate cot --bins 2 --seed 5 --in " + dir.file("cot.jsonl") + " --out " +
           dir.file("cc.jsonl"),
       {dir.file("cc.jsonl"), dir.file("cc.jsonl") + ".schema.json"}},
      {"curate difficulty",
       "curate difficulty --in " + dir.file("attempts.jsonl") + " --out " +
           dir.file("ak.jsonl"),
       {dir.file("ak.jsonl"), dir.file("ak.jsonl") + ".schema.json"}},
      {"curate resample (dataset)",
       "curate resample --mode dataset --datasets a:3:2,b:100:1 --total 30 --seed 9"
       " --out " + dir.file("counts.json"),
       {dir.file("counts.json")}},
      {"curate resample (ngram)",
       "curate resample --mode ngram --n 3 --cap 0.5 --seed 9 --in " +
           dir.file("tokens.jsonl") + " --out " + dir.file("ids.txt"),
       {dir.file("ids.txt")}},
      {"reward",
       "reward --weights 0.7,0.2,0.1 --in " + dir.file("rollouts.jsonl") + " --out " +
           dir.file("scored.jsonl"),
       {dir.file("scored.jsonl"), dir.file("scored.jsonl") + ".schema.json"}},
      {"soup merge",
       "soup merge --models " + dir.file("a.soup") + "," + dir.file("b.soup") +
           " --out " + dir.file("m.soup"),
       {dir.file("m.soup"), dir.file("m.soup") + ".manifest.json"}},
      {"moe stats",
       "moe stats --experts 4 --in " + dir.file("uniform.trace") + " --out " +
           dir.file("stats.json"),
       {dir.file("stats.json")}},
      {"moe calibrate",
       "moe calibrate --experts 2 --in " + dir.file("d0.trace") + "," +
           dir.file("d1.trace") + " --out " + dir.file("cal.json"),
       {dir.file("cal.json")}},
  };

  for (const auto& stage : stages) {
    const std::string cmd = std::string(kCli) + " " + stage.args;
    const auto first = testutil::run_command(cmd, dir);
    INFO("stage: " << stage.name);
    ACCEPT(crit, first.exit_code == 0);
    std::vector<std::string> bytes;
    for (const auto& f : stage.outputs) bytes.push_back(testutil::read_file(f));
    const auto second = testutil::run_command(cmd, dir);
    ACCEPT(crit, second.exit_code == 0);
    ACCEPT(crit, second.stdout_text == first.stdout_text);
    for (std::size_t i = 0; i < stage.outputs.size(); ++i) {
      ACCEPT(crit, testutil::read_file(stage.outputs[i]) == bytes[i]);
    }
  }
}
