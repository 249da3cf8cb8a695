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

// Adaptive learning-rate search: a backtracking line search on the training
// loss slope. The scheduler alternates k-step windows: a baseline window at
// the committed lr, then a trial window at a tentatively raised lr. After the
// trial it either commits the raise, rolls the trainer back and lowers the
// lr, or reverts to the committed lr. Raise/lower factors decay toward 1 as
// adjustments accumulate, so the search settles.

#ifndef TRAINOPS_ADALRS_HPP_
#define TRAINOPS_ADALRS_HPP_

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trainops/errors.hpp"

namespace trainops::adalrs {

using SnapshotToken = std::uint64_t;

// Owned by the trainer; the scheduler treats tokens as opaque handles and
// never inspects parameters.
class SnapshotProvider {
 public:
  virtual ~SnapshotProvider() = default;
  virtual SnapshotToken snapshot() = 0;
  virtual bool restore(SnapshotToken token) = 0;
  virtual void release(SnapshotToken /*token*/) {}
};

struct SlopeEstimate {
  double slope = 0.0;  // loss change per step; negative = descending
  int window_len = 0;
};

// Least-squares slope of loss against step index 0..m-1. Exact on affine
// inputs. Requires at least two finite points.
inline SlopeEstimate estimate_slope(const std::vector<double>& losses) {
  const std::size_t m = losses.size();
  if (m < 2) {
    throw InvalidInputError("estimate_slope: need at least 2 points, got " +
                            std::to_string(m));
  }
  for (double l : losses) {
    if (!std::isfinite(l)) {
      throw InvalidInputError("estimate_slope: non-finite loss value");
    }
  }
  const double mean_x = static_cast<double>(m - 1) / 2.0;
  double mean_y = 0.0;
  for (double l : losses) mean_y += l;
  mean_y /= static_cast<double>(m);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dx = static_cast<double>(i) - mean_x;
    sxy += dx * (losses[i] - mean_y);
    sxx += dx * dx;
  }
  return SlopeEstimate{sxy / sxx, static_cast<int>(m)};
}

// Standard error of the fitted slope; 0 when the fit is exact or m == 2.
// Used as the default estimation-error bound when the config leaves it unset.
inline double slope_standard_error(const std::vector<double>& losses) {
  const std::size_t m = losses.size();
  const SlopeEstimate est = estimate_slope(losses);
  if (m == 2) return 0.0;
  const double mean_x = static_cast<double>(m - 1) / 2.0;
  double mean_y = 0.0;
  for (double l : losses) mean_y += l;
  mean_y /= static_cast<double>(m);
  const double intercept = mean_y - est.slope * mean_x;
  double ss_res = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = static_cast<double>(i);
    const double r = losses[i] - (intercept + est.slope * x);
    ss_res += r * r;
    sxx += (x - mean_x) * (x - mean_x);
  }
  const double var = ss_res / static_cast<double>(m - 2);
  return std::sqrt(var / sxx);
}

// How "the slope increases" in the three-way rule is read. FasterDescent
// treats descent velocity (-slope) improving as the keep condition; the
// literal alternative compares raw signed slopes.
enum class SlopePolarity { kFasterDescent, kSignedSlope };

struct AdaLrsConfig {
  int alpha = 3;   // up-scale base, integer > 1
  int beta = 2;    // down-scale base, integer > 1, co-prime with alpha
  double lambda = 0.9;  // decay factor in (0,1)
  int window_k = 10;
  // Estimation error bound e. Unset means: use the standard error of the
  // baseline window's fitted slope, re-derived per trial.
  std::optional<double> slope_error_e{};
  double initial_lr = 1e-4;
  int max_adjustments = 8;
  SlopePolarity polarity = SlopePolarity::kFasterDescent;

  void validate() const {
    if (alpha < 2 || beta < 2) throw ConfigError("adalrs: alpha and beta must be >= 2");
    if (std::gcd(alpha, beta) != 1) throw ConfigError("adalrs: alpha and beta must be co-prime");
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("adalrs: lambda must be in (0,1)");
    if (window_k < 2) throw ConfigError("adalrs: window_k must be >= 2");
    if (slope_error_e && *slope_error_e < 0.0) throw ConfigError("adalrs: slope_error_e must be >= 0");
    if (!(initial_lr > 0.0)) throw ConfigError("adalrs: initial_lr must be > 0");
    if (max_adjustments < 0) throw ConfigError("adalrs: max_adjustments must be >= 0");
  }
};

// alpha' = max(lambda^t * alpha, 1), beta' = 1 / max(lambda^t * beta, 1),
// t = number of committed scale events so far.
inline std::pair<double, double> rectified_factors(const AdaLrsConfig& cfg,
                                                   int adjustment_count) {
  const double decay = std::pow(cfg.lambda, static_cast<double>(adjustment_count));
  const double alpha_prime = std::max(decay * static_cast<double>(cfg.alpha), 1.0);
  const double beta_prime = 1.0 / std::max(decay * static_cast<double>(cfg.beta), 1.0);
  return {alpha_prime, beta_prime};
}

enum class Phase { kProbing, kTrialUp, kStable };

enum class DecisionKind { kKeep, kScaleUp, kRollbackAndScaleDown };

struct Decision {
  DecisionKind kind = DecisionKind::kKeep;
  double lr_after = 0.0;  // effective lr for the next training step
};

struct AdaLrsState {
  double lr = 0.0;               // effective lr (trial lr while probing up)
  std::uint64_t step = 0;        // losses observed
  int adjustment_count = 0;      // exponent t in lambda^t
  std::vector<double> loss_window;  // at most window_k entries, arrival order
  Phase phase = Phase::kProbing;
  SnapshotToken snapshot = 0;
  double baseline_slope = 0.0;   // v(eta_t) of the pre-trial window
  double pre_trial_lr = 0.0;     // eta_t while a trial is running
  double auto_error = 0.0;       // stderr of the baseline fit

  static AdaLrsState init(const AdaLrsConfig& cfg) {
    cfg.validate();
    AdaLrsState s;
    s.lr = cfg.initial_lr;
    return s;
  }
};

// The committed lr eta_t: ignores the tentative raise while a trial runs.
inline double committed_lr(const AdaLrsState& s) {
  return s.phase == Phase::kTrialUp ? s.pre_trial_lr : s.lr;
}

namespace detail {

inline double descent_value(double slope, SlopePolarity polarity) {
  return polarity == SlopePolarity::kFasterDescent ? -slope : slope;
}

}  // namespace detail

// Feed one observed loss. Every call consumes one training step; windows fill
// at the committed lr (Probing) or at the raised lr (TrialUp), and a decision
// is committed when a trial window completes. Decisions:
//   ScaleUp              -- trial lr committed, adjustment_count incremented
//   RollbackAndScaleDown -- trainer restored to the pre-trial snapshot, lr
//                           lowered by beta', adjustment_count incremented
//   Keep                 -- no committed change (also returned mid-window)
inline Decision adalrs_step(AdaLrsState& state, const AdaLrsConfig& cfg,
                            double new_loss, SnapshotProvider& trainer) {
  if (!std::isfinite(new_loss)) {
    throw InvalidInputError("adalrs_step: non-finite loss");
  }
  state.step += 1;
  if (state.phase == Phase::kStable) {
    return {DecisionKind::kKeep, state.lr};
  }

  state.loss_window.push_back(new_loss);
  if (state.loss_window.size() < static_cast<std::size_t>(cfg.window_k)) {
    return {DecisionKind::kKeep, state.lr};
  }

  if (state.phase == Phase::kProbing) {
    const auto [alpha_prime, beta_prime] = rectified_factors(cfg, state.adjustment_count);
    if (alpha_prime == 1.0 && beta_prime == 1.0) {
      state.phase = Phase::kStable;
      state.loss_window.clear();
      return {DecisionKind::kKeep, state.lr};
    }
    state.baseline_slope = estimate_slope(state.loss_window).slope;
    state.auto_error = cfg.slope_error_e ? *cfg.slope_error_e
                                         : slope_standard_error(state.loss_window);
    state.snapshot = trainer.snapshot();
    state.pre_trial_lr = state.lr;
    state.lr = alpha_prime * state.lr;
    state.phase = Phase::kTrialUp;
    state.loss_window.clear();
    return {DecisionKind::kKeep, state.lr};
  }

  // Trial window complete: three-way rule.
  const double trial_slope = estimate_slope(state.loss_window).slope;
  const double e = state.auto_error;
  const double v_trial = detail::descent_value(trial_slope, cfg.polarity);
  const double v_base = detail::descent_value(state.baseline_slope, cfg.polarity);
  state.loss_window.clear();
  state.phase = Phase::kProbing;

  Decision decision;
  if (v_trial > v_base + 2.0 * e) {
    trainer.release(state.snapshot);
    state.adjustment_count += 1;
    decision = {DecisionKind::kScaleUp, state.lr};
  } else if (v_trial < v_base - 2.0 * e) {
    if (!trainer.restore(state.snapshot)) {
      throw SnapshotError("adalrs_step: snapshot restore failed");
    }
    trainer.release(state.snapshot);
    const auto [alpha_prime, beta_prime] = rectified_factors(cfg, state.adjustment_count);
    (void)alpha_prime;
    state.lr = beta_prime * state.pre_trial_lr;
    state.adjustment_count += 1;
    decision = {DecisionKind::kRollbackAndScaleDown, state.lr};
  } else {
    trainer.release(state.snapshot);
    state.lr = state.pre_trial_lr;
    decision = {DecisionKind::kKeep, state.lr};
  }

  if (state.adjustment_count >= cfg.max_adjustments) {
    state.phase = Phase::kStable;
  }
  return decision;
}

inline const char* decision_name(DecisionKind k) {
  switch (k) {
    case DecisionKind::kKeep: return "keep";
    case DecisionKind::kScaleUp: return "scale_up";
    case DecisionKind::kRollbackAndScaleDown: return "rollback_scale_down";
  }
  return "keep";
}

}  // namespace trainops::adalrs

#endif  // TRAINOPS_ADALRS_HPP_
