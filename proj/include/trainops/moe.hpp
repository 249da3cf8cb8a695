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

// Expert-balance analysis for mixture-of-experts routing: the switch-style
// auxiliary load-balancing loss E * sum_e f_e * p_e, cross-rank averaging,
// normalized activation entropy, and data-mixture calibration that
// maximizes blended activation entropy over a 0.05-step weight grid.

#ifndef TRAINOPS_MOE_HPP_
#define TRAINOPS_MOE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trainops/errors.hpp"
#include "trainops/textio.hpp"

namespace trainops::moe {

struct RoutingTrace {
  int n_experts = 0;
  std::vector<std::vector<double>> gate_probs;        // per token, length E
  std::vector<std::vector<int>> topk_assignments;     // per token, k indices
  int rank_id = 0;
};

inline void validate_trace(const RoutingTrace& t) {
  if (t.n_experts < 1) throw InvalidInputError("trace: n_experts must be >= 1");
  if (t.gate_probs.size() != t.topk_assignments.size()) {
    throw InvalidInputError("trace: gate/assignment token counts differ");
  }
  for (const auto& g : t.gate_probs) {
    if (static_cast<int>(g.size()) != t.n_experts) {
      throw InvalidInputError("trace: gate vector length != n_experts");
    }
    double s = 0.0;
    for (double p : g) {
      if (p < 0.0) throw InvalidInputError("trace: negative gate probability");
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-6) {
      throw InvalidInputError("trace: gate vector sums to " + format_double(s));
    }
  }
  for (const auto& a : t.topk_assignments) {
    if (a.empty()) throw InvalidInputError("trace: token with no assignment");
    for (int e : a) {
      if (e < 0 || e >= t.n_experts) {
        throw InvalidInputError("trace: assignment index out of range");
      }
    }
  }
}

// Per-expert routing statistics: f_e is the fraction of top-k assignments
// routed to expert e, p_e the mean gate probability of expert e.
struct ExpertStats {
  int n_experts = 0;
  std::vector<double> assign_frac;  // f
  std::vector<double> mean_gate;    // p
  std::uint64_t token_count = 0;
};

inline ExpertStats trace_stats(const RoutingTrace& trace) {
  validate_trace(trace);
  const std::size_t n_tokens = trace.gate_probs.size();
  if (n_tokens == 0) throw UndefinedMetricError("routing statistics");
  ExpertStats st;
  st.n_experts = trace.n_experts;
  st.token_count = n_tokens;
  st.assign_frac.assign(trace.n_experts, 0.0);
  st.mean_gate.assign(trace.n_experts, 0.0);
  std::uint64_t total_assignments = 0;
  for (const auto& a : trace.topk_assignments) {
    for (int e : a) st.assign_frac[e] += 1.0;
    total_assignments += a.size();
  }
  for (auto& f : st.assign_frac) f /= static_cast<double>(total_assignments);
  for (const auto& g : trace.gate_probs) {
    for (int e = 0; e < trace.n_experts; ++e) st.mean_gate[e] += g[e];
  }
  for (auto& p : st.mean_gate) p /= static_cast<double>(n_tokens);
  return st;
}

inline double load_balance_loss_from_stats(const ExpertStats& st) {
  double s = 0.0;
  for (int e = 0; e < st.n_experts; ++e) {
    s += st.assign_frac[e] * st.mean_gate[e];
  }
  return static_cast<double>(st.n_experts) * s;
}

// E * sum_e f_e * p_e. Equals 1 exactly under perfectly uniform routing
// (dyadic gates keep every intermediate representable).
inline double load_balance_loss(const RoutingTrace& trace) {
  return load_balance_loss_from_stats(trace_stats(trace));
}

// Token-count-weighted mean of f and p across ranks. A single trace is
// returned untouched so the one-rank case is an exact identity.
inline ExpertStats average_across_ranks(const std::vector<RoutingTrace>& traces) {
  if (traces.empty()) throw InvalidInputError("average_across_ranks: no traces");
  std::vector<ExpertStats> per_rank;
  per_rank.reserve(traces.size());
  for (const auto& t : traces) {
    if (t.n_experts != traces[0].n_experts) {
      throw InvalidInputError("average_across_ranks: expert counts differ across ranks");
    }
    per_rank.push_back(trace_stats(t));
  }
  if (per_rank.size() == 1) return per_rank[0];
  ExpertStats merged;
  merged.n_experts = per_rank[0].n_experts;
  merged.assign_frac.assign(merged.n_experts, 0.0);
  merged.mean_gate.assign(merged.n_experts, 0.0);
  double weight_sum = 0.0;
  for (const auto& st : per_rank) {
    const double w = static_cast<double>(st.token_count);
    weight_sum += w;
    merged.token_count += st.token_count;
    for (int e = 0; e < merged.n_experts; ++e) {
      merged.assign_frac[e] += w * st.assign_frac[e];
      merged.mean_gate[e] += w * st.mean_gate[e];
    }
  }
  for (int e = 0; e < merged.n_experts; ++e) {
    merged.assign_frac[e] /= weight_sum;
    merged.mean_gate[e] /= weight_sum;
  }
  return merged;
}

namespace detail {

inline double raw_entropy(const std::vector<double>& f) {
  double h = 0.0;
  for (double p : f) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

inline bool all_entries_equal(const std::vector<double>& f) {
  for (double p : f) {
    if (p != f[0]) return false;
  }
  return true;
}

}  // namespace detail

// Shannon entropy of the usage distribution normalized by ln E, clamped to
// [0,1]. An exactly uniform distribution (all entries bit-identical) short
// circuits to 1.0, and E = 1 is defined as 1 by convention: a single expert
// is trivially balanced.
inline double activation_entropy(const std::vector<double>& usage) {
  if (usage.empty()) throw InvalidInputError("activation_entropy: empty distribution");
  double sum = 0.0;
  for (double p : usage) {
    if (p < 0.0) throw InvalidInputError("activation_entropy: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw InvalidInputError("activation_entropy: distribution sums to " +
                            format_double(sum));
  }
  if (usage.size() == 1) return 1.0;
  if (detail::all_entries_equal(usage)) return 1.0;
  const double h = detail::raw_entropy(usage) / std::log(static_cast<double>(usage.size()));
  return std::clamp(h, 0.0, 1.0);
}

struct MixtureWeights {
  std::vector<double> weights;  // simplex over candidate datasets

  void validate() const {
    if (weights.empty()) throw ConfigError("mixture weights: empty");
    double sum = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw ConfigError("mixture weights: negative entry");
      sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw ConfigError("mixture weights: sum to " + format_double(sum));
    }
  }
};

inline std::vector<double> blend_usage(const std::vector<std::vector<double>>& usage,
                                       const std::vector<double>& weights) {
  const std::size_t e = usage.at(0).size();
  std::vector<double> out(e, 0.0);
  for (std::size_t d = 0; d < usage.size(); ++d) {
    for (std::size_t i = 0; i < e; ++i) out[i] += weights[d] * usage[d][i];
  }
  return out;
}

namespace detail {

// Entropy of a blend without the simplex validation (blends of valid
// distributions can drift a few ulps off 1).
inline double blend_entropy(const std::vector<std::vector<double>>& usage,
                            const std::vector<double>& weights) {
  const std::vector<double> f = blend_usage(usage, weights);
  if (f.size() == 1) return 1.0;
  if (all_entries_equal(f)) return 1.0;
  const double h = raw_entropy(f) / std::log(static_cast<double>(f.size()));
  return std::clamp(h, 0.0, 1.0);
}

inline constexpr int kGridUnits = 20;  // 0.05 granularity

// Visits every composition of kGridUnits over d datasets in lexicographic
// order. Returns the number of points visited.
template <typename Visit>
inline std::uint64_t enumerate_lattice(int d, Visit&& visit) {
  std::vector<int> units(d, 0);
  std::uint64_t visited = 0;
  auto rec = [&](auto&& self, int pos, int left) -> void {
    if (pos == d - 1) {
      units[pos] = left;
      ++visited;
      visit(units);
      return;
    }
    for (int u = 0; u <= left; ++u) {
      units[pos] = u;
      self(self, pos + 1, left - u);
    }
  };
  rec(rec, 0, kGridUnits);
  return visited;
}

inline std::uint64_t lattice_size(int d) {
  // C(kGridUnits + d - 1, d - 1)
  std::uint64_t num = 1, den = 1;
  for (int i = 1; i <= d - 1; ++i) {
    num *= static_cast<std::uint64_t>(kGridUnits + i);
    den *= static_cast<std::uint64_t>(i);
  }
  return num / den;
}

}  // namespace detail

// Entropy-maximizing mixture calibration on the 0.05-step simplex grid.
// The exact-uniform point (1/d each) is always a candidate and wins ties,
// so the result never has lower blended entropy than the uniform start; in
// particular identical usage rows return exactly uniform weights. When the
// whole grid fits in the budget it is enumerated outright (the 3-dataset
// grid has 231 points); otherwise hill-climbing by single 0.05-unit
// transfers runs from the near-uniform grid point until the budget or a
// local optimum is reached.
inline MixtureWeights calibrate_mixture(const std::vector<std::vector<double>>& usage,
                                        int budget = 10000) {
  const int d = static_cast<int>(usage.size());
  if (d < 1) throw InvalidInputError("calibrate_mixture: no candidate datasets");
  const std::size_t e = usage[0].size();
  if (e == 0) throw InvalidInputError("calibrate_mixture: empty usage distribution");
  for (const auto& f : usage) {
    if (f.size() != e) throw InvalidInputError("calibrate_mixture: ragged usage rows");
  }
  if (budget < 1) throw ConfigError("calibrate_mixture: budget must be >= 1");

  const std::vector<double> uniform(d, 1.0 / static_cast<double>(d));
  // Identical usage rows give every mixture the same blend; there is no
  // gradient and the answer is uniform by definition.
  bool all_rows_equal = true;
  for (const auto& f : usage) {
    if (f != usage[0]) {
      all_rows_equal = false;
      break;
    }
  }
  if (all_rows_equal) {
    MixtureWeights out;
    out.weights = uniform;
    out.validate();
    return out;
  }
  const double uniform_entropy = detail::blend_entropy(usage, uniform);

  auto weights_of = [&](const std::vector<int>& units) {
    std::vector<double> w(d);
    for (int i = 0; i < d; ++i) {
      w[i] = static_cast<double>(units[i]) / static_cast<double>(detail::kGridUnits);
    }
    return w;
  };

  std::vector<int> best_units;
  double best_entropy = -1.0;
  auto consider = [&](const std::vector<int>& units) {
    const double h = detail::blend_entropy(usage, weights_of(units));
    if (h > best_entropy) {
      best_entropy = h;
      best_units = units;
    }
  };

  if (detail::lattice_size(d) <= static_cast<std::uint64_t>(budget)) {
    detail::enumerate_lattice(d, consider);
  } else {
    // Near-uniform start: distribute the units as evenly as the grid allows.
    std::vector<int> units(d, detail::kGridUnits / d);
    int excess = detail::kGridUnits;
    for (int u : units) excess -= u;
    for (int i = 0; i < excess; ++i) units[i] += 1;
    consider(units);
    int evaluations = 1;
    bool improved = true;
    while (improved && evaluations < budget) {
      improved = false;
      std::vector<int> step_best = units;
      double step_entropy = detail::blend_entropy(usage, weights_of(units));
      for (int i = 0; i < d && evaluations < budget; ++i) {
        if (units[i] == 0) continue;
        for (int j = 0; j < d && evaluations < budget; ++j) {
          if (i == j) continue;
          std::vector<int> cand = units;
          cand[i] -= 1;
          cand[j] += 1;
          const double h = detail::blend_entropy(usage, weights_of(cand));
          ++evaluations;
          if (h > step_entropy) {
            step_entropy = h;
            step_best = cand;
          }
        }
      }
      if (step_best != units) {
        units = step_best;
        consider(units);
        improved = true;
      }
    }
  }

  MixtureWeights out;
  if (uniform_entropy >= best_entropy) {
    out.weights = uniform;
  } else {
    out.weights = weights_of(best_units);
  }
  out.validate();
  return out;
}

// --- Trace ingestion ----------------------------------------------------------

// One token per line: rank, token_idx, [topk indices], [gate probs].
inline void parse_trace_line(const std::string& line, int n_experts,
                             std::vector<RoutingTrace>& traces) {
  const std::vector<std::string> fields = split_fields(line, ',');
  if (fields.size() < 4) {
    throw InvalidInputError("trace record needs 4 fields: " + line);
  }
  const int rank = static_cast<int>(parse_int(fields[0], "rank"));
  // token_idx is informational; tokens keep file order.
  (void)parse_int(fields[1], "token_idx");

  // The two lists are recovered from the raw line so that either space- or
  // comma-separated entries inside the brackets parse the same way.
  const std::size_t open1 = line.find('[');
  const std::size_t close1 = line.find(']', open1);
  const std::size_t open2 = line.find('[', close1 == std::string::npos ? 0 : close1);
  const std::size_t close2 = line.find(']', open2 == std::string::npos ? 0 : open2);
  if (open1 == std::string::npos || close1 == std::string::npos ||
      open2 == std::string::npos || close2 == std::string::npos) {
    throw InvalidInputError("trace record needs two bracketed lists: " + line);
  }
  std::string idx_list = line.substr(open1 + 1, close1 - open1 - 1);
  std::string prob_list = line.substr(open2 + 1, close2 - open2 - 1);
  std::replace(idx_list.begin(), idx_list.end(), ',', ' ');
  std::replace(prob_list.begin(), prob_list.end(), ',', ' ');

  std::vector<int> topk;
  for (auto tok : whitespace_tokens(idx_list)) {
    topk.push_back(static_cast<int>(parse_int(tok, "topk index")));
  }
  std::vector<double> gates;
  for (auto tok : whitespace_tokens(prob_list)) {
    gates.push_back(parse_double(tok, "gate prob"));
  }
  RoutingTrace* trace = nullptr;
  for (auto& t : traces) {
    if (t.rank_id == rank) {
      trace = &t;
      break;
    }
  }
  if (trace == nullptr) {
    traces.push_back(RoutingTrace{});
    trace = &traces.back();
    trace->rank_id = rank;
    trace->n_experts = n_experts;
  }
  trace->topk_assignments.push_back(std::move(topk));
  trace->gate_probs.push_back(std::move(gates));
}

inline std::string trace_line(int rank, std::uint64_t token_idx,
                              const std::vector<int>& topk,
                              const std::vector<double>& gates) {
  std::string out = std::to_string(rank);
  out += ", ";
  out += std::to_string(token_idx);
  out += ", [";
  for (std::size_t i = 0; i < topk.size(); ++i) {
    if (i > 0) out += ' ';
    out += std::to_string(topk[i]);
  }
  out += "], [";
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (i > 0) out += ' ';
    out += format_double(gates[i]);
  }
  out += ']';
  return out;
}

}  // namespace trainops::moe

#endif  // TRAINOPS_MOE_HPP_
