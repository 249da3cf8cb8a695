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

// Synthetic optimization landscapes plus a byte-serializable SGD trainer.
// This is the verification harness for the lr scheduler: deterministic under
// seed, snapshots restore bit-identically, and trajectories export as text.

#ifndef TRAINOPS_LANDSCAPE_HPP_
#define TRAINOPS_LANDSCAPE_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "trainops/adalrs.hpp"
#include "trainops/errors.hpp"
#include "trainops/rng.hpp"
#include "trainops/textio.hpp"

namespace trainops::adalrs {

enum class LandscapeKind { kQuadratic, kRosenbrock, kLogSumExp };

inline LandscapeKind landscape_from_name(const std::string& name) {
  if (name == "quadratic") return LandscapeKind::kQuadratic;
  if (name == "rosenbrock") return LandscapeKind::kRosenbrock;
  if (name == "logsumexp") return LandscapeKind::kLogSumExp;
  throw ConfigError("unknown landscape: " + name);
}

struct LandscapeConfig {
  LandscapeKind kind = LandscapeKind::kQuadratic;
  int dim = 8;
  double condition = 10.0;   // quadratic curvature spread [1, condition]
  double noise_sigma = 0.0;  // per-coordinate gaussian gradient noise
  std::uint64_t seed = 1;    // geometry seed
};

// Deterministic loss surface; geometry is fixed at construction from the
// config seed, so loss() and gradient() are pure.
class SyntheticLossLandscape {
 public:
  explicit SyntheticLossLandscape(const LandscapeConfig& cfg) : cfg_(cfg) {
    if (cfg.dim < 2) throw ConfigError("landscape: dim must be >= 2");
    Rng rng(cfg.seed);
    switch (cfg_.kind) {
      case LandscapeKind::kQuadratic: {
        curvature_.resize(cfg_.dim);
        for (auto& a : curvature_) {
          a = std::exp(rng.uniform(0.0, std::log(cfg_.condition)));
        }
        break;
      }
      case LandscapeKind::kRosenbrock:
        break;
      case LandscapeKind::kLogSumExp: {
        const int terms = 2 * cfg_.dim;
        planes_.assign(terms, std::vector<double>(cfg_.dim));
        offsets_.resize(terms);
        for (int j = 0; j < terms; ++j) {
          for (int i = 0; i < cfg_.dim; ++i) planes_[j][i] = rng.gaussian();
          offsets_[j] = rng.gaussian();
        }
        break;
      }
    }
  }

  const LandscapeConfig& config() const { return cfg_; }
  int dim() const { return cfg_.dim; }

  double loss(const std::vector<double>& w) const {
    switch (cfg_.kind) {
      case LandscapeKind::kQuadratic: {
        double s = 0.0;
        for (int i = 0; i < cfg_.dim; ++i) s += curvature_[i] * w[i] * w[i];
        return 0.5 * s;
      }
      case LandscapeKind::kRosenbrock: {
        double s = 0.0;
        for (int i = 0; i + 1 < cfg_.dim; ++i) {
          const double a = w[i + 1] - w[i] * w[i];
          const double b = 1.0 - w[i];
          s += 100.0 * a * a + b * b;
        }
        return s;
      }
      case LandscapeKind::kLogSumExp: {
        double mx = -1e300;
        for (std::size_t j = 0; j < planes_.size(); ++j) {
          mx = std::max(mx, dot(planes_[j], w) + offsets_[j]);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < planes_.size(); ++j) {
          s += std::exp(dot(planes_[j], w) + offsets_[j] - mx);
        }
        return mx + std::log(s);
      }
    }
    return 0.0;
  }

  void gradient(const std::vector<double>& w, std::vector<double>& out) const {
    out.assign(cfg_.dim, 0.0);
    switch (cfg_.kind) {
      case LandscapeKind::kQuadratic: {
        for (int i = 0; i < cfg_.dim; ++i) out[i] = curvature_[i] * w[i];
        break;
      }
      case LandscapeKind::kRosenbrock: {
        for (int i = 0; i + 1 < cfg_.dim; ++i) {
          const double a = w[i + 1] - w[i] * w[i];
          out[i] += -400.0 * w[i] * a - 2.0 * (1.0 - w[i]);
          out[i + 1] += 200.0 * a;
        }
        break;
      }
      case LandscapeKind::kLogSumExp: {
        double mx = -1e300;
        for (std::size_t j = 0; j < planes_.size(); ++j) {
          mx = std::max(mx, dot(planes_[j], w) + offsets_[j]);
        }
        double z = 0.0;
        std::vector<double> p(planes_.size());
        for (std::size_t j = 0; j < planes_.size(); ++j) {
          p[j] = std::exp(dot(planes_[j], w) + offsets_[j] - mx);
          z += p[j];
        }
        for (std::size_t j = 0; j < planes_.size(); ++j) {
          const double pj = p[j] / z;
          for (int i = 0; i < cfg_.dim; ++i) out[i] += pj * planes_[j][i];
        }
        break;
      }
    }
  }

  // Conventional start point for the surface, drawn with the given rng where
  // the surface has no canonical one.
  std::vector<double> initial_params(Rng& rng) const {
    std::vector<double> w(cfg_.dim);
    switch (cfg_.kind) {
      case LandscapeKind::kQuadratic:
        for (auto& x : w) x = rng.gaussian();
        break;
      case LandscapeKind::kRosenbrock:
        for (int i = 0; i < cfg_.dim; ++i) w[i] = (i % 2 == 0) ? -1.2 : 1.0;
        break;
      case LandscapeKind::kLogSumExp:
        for (auto& x : w) x = 2.0 * rng.gaussian();
        break;
    }
    return w;
  }

 private:
  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  LandscapeConfig cfg_;
  std::vector<double> curvature_;           // quadratic
  std::vector<std::vector<double>> planes_; // logsumexp
  std::vector<double> offsets_;             // logsumexp
};

// Plain SGD over a landscape. Full state (params, noise rng, step counter)
// serializes to bytes; snapshots store those bytes so restore is exact.
class SyntheticTrainer : public SnapshotProvider {
 public:
  SyntheticTrainer(const SyntheticLossLandscape& landscape, std::uint64_t seed)
      : landscape_(landscape), noise_rng_(seed ^ 0x9e3779b97f4a7c15ull) {
    Rng start_rng(seed);
    params_ = landscape.initial_params(start_rng);
  }

  double loss() const { return landscape_.loss(params_); }
  const std::vector<double>& params() const { return params_; }
  std::uint64_t step_count() const { return step_; }

  void sgd_step(double lr) {
    landscape_.gradient(params_, grad_);
    const double sigma = landscape_.config().noise_sigma;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      double g = grad_[i];
      if (sigma > 0.0) g += sigma * noise_rng_.gaussian();
      params_[i] -= lr * g;
    }
    step_ += 1;
  }

  // Byte image of the full trainer state. Params and step are raw little
  // endian; the rng engine uses its standard textual serialization.
  std::string serialize_state() const {
    std::ostringstream os;
    os << step_ << '\n' << params_.size() << '\n';
    for (double v : params_) {
      os << std::bit_cast<std::uint64_t>(v) << ' ';
    }
    os << '\n' << noise_rng_.serialize() << '\n';
    return os.str();
  }

  void deserialize_state(const std::string& bytes) {
    std::istringstream is(bytes);
    std::size_t n = 0;
    is >> step_ >> n;
    params_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      is >> bits;
      params_[i] = std::bit_cast<double>(bits);
    }
    std::string rest;
    std::getline(is, rest);  // consume newline after params
    std::getline(is, rest);
    noise_rng_.deserialize(rest);
  }

  SnapshotToken snapshot() override {
    const SnapshotToken token = next_token_++;
    snapshots_[token] = serialize_state();
    return token;
  }

  bool restore(SnapshotToken token) override {
    auto it = snapshots_.find(token);
    if (it == snapshots_.end()) return false;
    deserialize_state(it->second);
    return true;
  }

  void release(SnapshotToken token) override { snapshots_.erase(token); }

 private:
  // Gaussian noise stream with explicit, serializable spare-value state.
  class NoiseRng {
   public:
    explicit NoiseRng(std::uint64_t seed) : eng_(seed) {}

    double gaussian() {
      if (have_spare_) {
        have_spare_ = false;
        return spare_;
      }
      double u, v, s;
      do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
      } while (s >= 1.0 || s == 0.0);
      const double m = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * m;
      have_spare_ = true;
      return u * m;
    }

    std::string serialize() const {
      std::ostringstream os;
      os << eng_ << ' ' << (have_spare_ ? 1 : 0) << ' '
         << std::bit_cast<std::uint64_t>(spare_);
      return os.str();
    }

    void deserialize(const std::string& s) {
      std::istringstream is(s);
      is >> eng_;
      int flag = 0;
      std::uint64_t bits = 0;
      is >> flag >> bits;
      have_spare_ = (flag != 0);
      spare_ = std::bit_cast<double>(bits);
    }

   private:
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
  };

  const SyntheticLossLandscape& landscape_;
  std::vector<double> params_;
  std::vector<double> grad_;
  std::uint64_t step_ = 0;
  NoiseRng noise_rng_;
  std::map<SnapshotToken, std::string> snapshots_;
  SnapshotToken next_token_ = 1;
};

struct TrajectoryRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  DecisionKind decision = DecisionKind::kKeep;
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;
  bool diverged = false;
  double final_lr = 0.0;
  double final_loss = 0.0;
};

inline constexpr double kDivergenceGuard = 1e100;

// Gradient descent with the scheduler attached. Each iteration observes the
// current loss, lets the scheduler act (possibly snapshotting or rolling the
// trainer back), then takes one SGD step at the resulting lr. Rolled-back
// probe steps still consume budget.
inline Trajectory run_synthetic_trial(const SyntheticLossLandscape& landscape,
                                      const AdaLrsConfig& cfg, int steps,
                                      std::uint64_t seed) {
  cfg.validate();
  SyntheticTrainer trainer(landscape, seed);
  AdaLrsState state = AdaLrsState::init(cfg);
  Trajectory traj;
  traj.final_lr = cfg.initial_lr;
  traj.final_loss = trainer.loss();
  for (int i = 0; i < steps; ++i) {
    const double loss = trainer.loss();
    if (!std::isfinite(loss) || loss > kDivergenceGuard) {
      traj.diverged = true;
      break;
    }
    const Decision d = adalrs_step(state, cfg, loss, trainer);
    traj.records.push_back({static_cast<std::uint64_t>(i), d.lr_after, loss, d.kind});
    trainer.sgd_step(d.lr_after);
  }
  traj.final_lr = state.lr;
  traj.final_loss = trainer.loss();
  return traj;
}

// Fixed-lr baseline under the identical step/noise regime.
inline Trajectory run_fixed_lr(const SyntheticLossLandscape& landscape, double lr,
                               int steps, std::uint64_t seed) {
  SyntheticTrainer trainer(landscape, seed);
  Trajectory traj;
  traj.final_lr = lr;
  traj.final_loss = trainer.loss();
  for (int i = 0; i < steps; ++i) {
    const double loss = trainer.loss();
    if (!std::isfinite(loss) || loss > kDivergenceGuard) {
      traj.diverged = true;
      break;
    }
    traj.records.push_back({static_cast<std::uint64_t>(i), lr, loss, DecisionKind::kKeep});
    trainer.sgd_step(lr);
  }
  traj.final_lr = lr;
  traj.final_loss = trainer.loss();
  return traj;
}

// Mean of the last <= k recorded losses; robust "final loss" for noisy runs.
inline double tail_mean_loss(const Trajectory& traj, std::size_t k) {
  if (traj.records.empty()) return traj.final_loss;
  const std::size_t n = std::min(k, traj.records.size());
  double s = 0.0;
  for (std::size_t i = traj.records.size() - n; i < traj.records.size(); ++i) {
    s += traj.records[i].loss;
  }
  return s / static_cast<double>(n);
}

// One record per line: step, lr, loss, decision. Numbers carry enough
// digits to round-trip the doubles exactly.
inline std::string trajectory_to_text(const Trajectory& traj) {
  std::string out;
  for (const auto& r : traj.records) {
    out += std::to_string(r.step);
    out += ", ";
    out += format_double(r.lr);
    out += ", ";
    out += format_double(r.loss);
    out += ", ";
    out += decision_name(r.decision);
    out += '\n';
  }
  return out;
}

}  // namespace trainops::adalrs

#endif  // TRAINOPS_LANDSCAPE_HPP_
