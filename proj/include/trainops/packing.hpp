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

// Stream packing: concatenates variable-length samples into fixed-capacity
// token streams (first-fit-decreasing), balances visual tokens across
// simulated devices, and guarantees periodic inclusion of aged samples.
//
// A stream never splits a sample. Samples longer than l_max are only
// scheduled once mandatory (age >= a_max) and then occupy a dedicated
// stream truncated to l_max.

#ifndef TRAINOPS_PACKING_HPP_
#define TRAINOPS_PACKING_HPP_

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "trainops/errors.hpp"
#include "trainops/textio.hpp"

namespace trainops::packing {

enum class Modality { kTextOnly, kImageText, kVideoText };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kTextOnly: return "TextOnly";
    case Modality::kImageText: return "ImageText";
    case Modality::kVideoText: return "VideoText";
  }
  return "TextOnly";
}

inline Modality modality_from_name(const std::string& name) {
  if (name == "TextOnly") return Modality::kTextOnly;
  if (name == "ImageText") return Modality::kImageText;
  if (name == "VideoText") return Modality::kVideoText;
  throw InvalidInputError("unknown modality: " + name);
}

struct SampleMeta {
  std::string id;
  std::uint64_t text_tokens = 0;
  std::uint64_t visual_tokens = 0;
  std::uint64_t arrival_seq = 0;
  std::uint32_t age = 0;  // rounds spent buffered without being scheduled
  Modality modality = Modality::kTextOnly;

  std::uint64_t total_tokens() const { return text_tokens + visual_tokens; }
};

inline void validate_sample(const SampleMeta& s) {
  if (s.id.empty()) throw InvalidInputError("sample id must be non-empty");
  if (s.total_tokens() < 1) {
    throw InvalidInputError("sample " + s.id + ": text_tokens + visual_tokens must be >= 1");
  }
}

struct Segment {
  std::string sample_id;
  std::uint64_t token_count = 0;
  bool truncated = false;
};

struct PackedStream {
  std::vector<Segment> segments;
  std::uint64_t capacity = 0;
  std::uint64_t used_tokens = 0;
  std::uint64_t visual_tokens = 0;
  // Block-diagonal mask: one block per segment, causal within the block.
  std::vector<std::uint64_t> mask_descriptor;      // segment lengths in order
  std::vector<std::uint64_t> position_descriptor;  // per-token positions, reset per segment
};

struct MicroBatchPlan {
  std::vector<std::vector<PackedStream>> device_batches;  // one list per device
  std::vector<std::uint64_t> visual_token_total;          // per device
  std::vector<std::uint64_t> text_token_total;            // per device
  std::vector<std::string> leftover_buffer;               // unscheduled ids, arrival order
  std::uint64_t l_max = 0;
};

struct PackerConfig {
  std::uint64_t l_max = 8192;
  int n_devices = 1;
  int streams_per_device = 1;
  std::uint32_t a_max = 4;
  // Max allowed spread of per-device visual totals; 0 means minimize only.
  std::uint64_t visual_balance_tolerance = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (l_max < 1) throw ConfigError("packer: l_max must be >= 1");
    if (n_devices < 1) throw ConfigError("packer: n_devices must be >= 1");
    if (streams_per_device < 1) throw ConfigError("packer: streams_per_device must be >= 1");
    if (a_max < 1) throw ConfigError("packer: a_max must be >= 1");
  }
};

// Multiple producers, one packing consumer. Inserts are linearizable;
// pack_round holds the lock for the whole round, so no insert is lost or
// duplicated across rounds.
class SampleBuffer {
 public:
  void insert(SampleMeta sample) {
    validate_sample(sample);
    std::lock_guard<std::mutex> lock(mu_);
    if (!ids_.insert(sample.id).second) {
      throw InvalidInputError("duplicate sample id: " + sample.id);
    }
    sample.arrival_seq = next_arrival_++;
    sample.age = 0;
    samples_.push_back(std::move(sample));
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return samples_.size();
  }

  bool empty() const { return size() == 0; }

  std::vector<SampleMeta> snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    return samples_;
  }

  std::uint32_t max_age() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::uint32_t mx = 0;
    for (const auto& s : samples_) mx = std::max(mx, s.age);
    return mx;
  }

 private:
  friend MicroBatchPlan pack_round(SampleBuffer& buffer, const PackerConfig& cfg);

  mutable std::mutex mu_;
  std::vector<SampleMeta> samples_;  // arrival order
  std::unordered_set<std::string> ids_;
  std::uint64_t next_arrival_ = 0;
};

enum class AssignmentPolicy {
  kBalanced,      // minimize per-device visual spread
  kArrivalOrder,  // fill device 0's slots first, then device 1, ...
};

namespace detail {

inline std::uint64_t spread_of(const std::vector<std::uint64_t>& totals) {
  if (totals.empty()) return 0;
  const auto [mn, mx] = std::minmax_element(totals.begin(), totals.end());
  return *mx - *mn;
}

// Longest-processing-time greedy on visual tokens, respecting the per-device
// stream-count cap, followed by a bounded swap refinement between the
// heaviest and lightest devices.
inline std::vector<int> assign_lpt(const std::vector<PackedStream>& streams,
                                   int n_devices, int streams_per_device) {
  const std::size_t k = streams.size();
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return streams[a].visual_tokens > streams[b].visual_tokens;
  });
  std::vector<int> device_of(k, 0);
  std::vector<std::uint64_t> load(n_devices, 0);
  std::vector<int> count(n_devices, 0);
  for (std::size_t idx : order) {
    int best = -1;
    for (int d = 0; d < n_devices; ++d) {
      if (count[d] >= streams_per_device) continue;
      if (best < 0 || load[d] < load[best]) best = d;
    }
    device_of[idx] = best;
    load[best] += streams[idx].visual_tokens;
    count[best] += 1;
  }
  // Swap refinement: trade one stream between the heaviest and lightest
  // device while that shrinks the spread.
  for (int iter = 0; iter < 64; ++iter) {
    int hi = 0, lo = 0;
    for (int d = 1; d < n_devices; ++d) {
      if (load[d] > load[hi]) hi = d;
      if (load[d] < load[lo]) lo = d;
    }
    if (hi == lo) break;
    const std::uint64_t spread = load[hi] - load[lo];
    std::int64_t best_gain = 0;
    std::size_t best_a = k, best_b = k;
    for (std::size_t a = 0; a < k; ++a) {
      if (device_of[a] != hi) continue;
      for (std::size_t b = 0; b < k; ++b) {
        if (device_of[b] != lo) continue;
        const std::int64_t delta = static_cast<std::int64_t>(streams[a].visual_tokens) -
                                   static_cast<std::int64_t>(streams[b].visual_tokens);
        if (delta <= 0) continue;
        const std::uint64_t new_hi = load[hi] - static_cast<std::uint64_t>(delta);
        const std::uint64_t new_lo = load[lo] + static_cast<std::uint64_t>(delta);
        const std::uint64_t new_spread =
            std::max(new_hi, new_lo) - std::min(new_hi, new_lo);
        const std::int64_t gain =
            static_cast<std::int64_t>(spread) - static_cast<std::int64_t>(new_spread);
        if (gain > best_gain) {
          best_gain = gain;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_gain <= 0) break;
    const std::int64_t delta = static_cast<std::int64_t>(streams[best_a].visual_tokens) -
                               static_cast<std::int64_t>(streams[best_b].visual_tokens);
    load[hi] -= static_cast<std::uint64_t>(delta);
    load[lo] += static_cast<std::uint64_t>(delta);
    std::swap(device_of[best_a], device_of[best_b]);
  }
  return device_of;
}

inline std::vector<int> assign_block(std::size_t k, int streams_per_device) {
  std::vector<int> device_of(k);
  for (std::size_t i = 0; i < k; ++i) {
    device_of[i] = static_cast<int>(i) / streams_per_device;
  }
  return device_of;
}

inline std::vector<int> assign_round_robin(std::size_t k, int n_devices) {
  std::vector<int> device_of(k);
  for (std::size_t i = 0; i < k; ++i) {
    device_of[i] = static_cast<int>(i % static_cast<std::size_t>(n_devices));
  }
  return device_of;
}

inline std::vector<std::uint64_t> loads_under(const std::vector<PackedStream>& streams,
                                              const std::vector<int>& device_of,
                                              int n_devices) {
  std::vector<std::uint64_t> load(n_devices, 0);
  for (std::size_t i = 0; i < streams.size(); ++i) {
    load[device_of[i]] += streams[i].visual_tokens;
  }
  return load;
}

}  // namespace detail

// Maps streams (in creation order) to devices. Balanced mode evaluates the
// LPT assignment against the two order-based ones and keeps whichever has
// the smallest visual spread, so enabling balancing never loses to the
// arrival-order layout.
inline std::vector<int> assign_devices(const std::vector<PackedStream>& streams,
                                       int n_devices, int streams_per_device,
                                       AssignmentPolicy policy) {
  if (policy == AssignmentPolicy::kArrivalOrder) {
    return detail::assign_block(streams.size(), streams_per_device);
  }
  std::vector<std::vector<int>> candidates;
  candidates.push_back(detail::assign_lpt(streams, n_devices, streams_per_device));
  candidates.push_back(detail::assign_block(streams.size(), streams_per_device));
  candidates.push_back(detail::assign_round_robin(streams.size(), n_devices));
  std::size_t best = 0;
  std::uint64_t best_spread = detail::spread_of(
      detail::loads_under(streams, candidates[0], n_devices));
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const std::uint64_t s = detail::spread_of(
        detail::loads_under(streams, candidates[c], n_devices));
    if (s < best_spread) {
      best_spread = s;
      best = c;
    }
  }
  return candidates[best];
}

namespace detail {

inline void finalize_stream(PackedStream& stream) {
  stream.mask_descriptor.clear();
  stream.position_descriptor.clear();
  for (const auto& seg : stream.segments) {
    stream.mask_descriptor.push_back(seg.token_count);
    for (std::uint64_t p = 0; p < seg.token_count; ++p) {
      stream.position_descriptor.push_back(p);
    }
  }
}

struct PackCoreResult {
  std::vector<PackedStream> streams;      // creation order
  std::vector<bool> scheduled;            // parallel to input samples
};

// Mandatory-first first-fit-decreasing. Over-length samples are placeable
// only in the mandatory phase, where each takes a dedicated truncated
// stream; in the discretionary phase they simply never fit and stay queued.
inline PackCoreResult pack_core(const std::vector<SampleMeta>& samples,
                                const PackerConfig& cfg) {
  const std::size_t total_slots =
      static_cast<std::size_t>(cfg.n_devices) *
      static_cast<std::size_t>(cfg.streams_per_device);
  PackCoreResult res;
  res.scheduled.assign(samples.size(), false);

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].total_tokens() != samples[b].total_tokens()) {
      return samples[a].total_tokens() > samples[b].total_tokens();
    }
    return samples[a].arrival_seq < samples[b].arrival_seq;
  });

  auto& streams = res.streams;
  std::uint64_t max_residual = 0;  // largest free space over open streams

  auto recompute_residual = [&]() {
    max_residual = 0;
    for (const auto& st : streams) {
      max_residual = std::max(max_residual, st.capacity - st.used_tokens);
    }
  };

  auto place = [&](std::size_t idx, bool mandatory) -> bool {
    const SampleMeta& s = samples[idx];
    const std::uint64_t need = s.total_tokens();
    if (need > cfg.l_max) {
      if (!mandatory) return false;
      if (streams.size() >= total_slots) return false;
      PackedStream st;
      st.capacity = cfg.l_max;
      st.used_tokens = cfg.l_max;
      // Visual tokens survive truncation accounting proportionally is
      // unknowable; charge the full visual load to keep balancing
      // conservative, capped to the stream capacity.
      st.visual_tokens = std::min(s.visual_tokens, cfg.l_max);
      st.segments.push_back({s.id, cfg.l_max, true});
      streams.push_back(std::move(st));
      return true;
    }
    if (need <= max_residual) {
      for (auto& st : streams) {
        if (st.capacity - st.used_tokens >= need) {
          st.segments.push_back({s.id, need, false});
          st.used_tokens += need;
          st.visual_tokens += s.visual_tokens;
          if (st.capacity - st.used_tokens + need == max_residual) recompute_residual();
          return true;
        }
      }
    }
    if (streams.size() < total_slots) {
      PackedStream st;
      st.capacity = cfg.l_max;
      st.used_tokens = need;
      st.visual_tokens = s.visual_tokens;
      st.segments.push_back({s.id, need, false});
      streams.push_back(std::move(st));
      max_residual = std::max(max_residual, cfg.l_max - need);
      return true;
    }
    return false;
  };

  std::size_t overflow = 0;
  for (std::size_t idx : order) {
    if (samples[idx].age >= cfg.a_max) {
      if (place(idx, true)) {
        res.scheduled[idx] = true;
      } else {
        ++overflow;
      }
    }
  }
  if (overflow > 0) {
    throw CapacityError("mandatory samples exceed stream capacity", overflow);
  }
  for (std::size_t idx : order) {
    if (samples[idx].age >= cfg.a_max) continue;
    if (place(idx, false)) res.scheduled[idx] = true;
  }
  for (auto& st : streams) finalize_stream(st);
  return res;
}

}  // namespace detail

// Pure core: packs one round from an explicit sample list. The returned plan
// is deterministic in (samples, cfg). Leftovers keep arrival order; their
// ages are NOT incremented here (the buffer owns aging).
inline MicroBatchPlan pack_samples(const std::vector<SampleMeta>& samples,
                                   const PackerConfig& cfg,
                                   AssignmentPolicy policy = AssignmentPolicy::kBalanced) {
  cfg.validate();
  if (samples.empty()) throw InvalidInputError("pack_round: buffer is empty");
  for (const auto& s : samples) validate_sample(s);

  detail::PackCoreResult core = detail::pack_core(samples, cfg);
  const std::vector<int> device_of =
      assign_devices(core.streams, cfg.n_devices, cfg.streams_per_device, policy);

  MicroBatchPlan plan;
  plan.l_max = cfg.l_max;
  plan.device_batches.assign(cfg.n_devices, {});
  plan.visual_token_total.assign(cfg.n_devices, 0);
  plan.text_token_total.assign(cfg.n_devices, 0);
  for (std::size_t i = 0; i < core.streams.size(); ++i) {
    const int d = device_of[i];
    plan.visual_token_total[d] += core.streams[i].visual_tokens;
    plan.text_token_total[d] +=
        core.streams[i].used_tokens - core.streams[i].visual_tokens;
    plan.device_batches[d].push_back(std::move(core.streams[i]));
  }
  std::vector<const SampleMeta*> leftovers;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!core.scheduled[i]) leftovers.push_back(&samples[i]);
  }
  std::sort(leftovers.begin(), leftovers.end(),
            [](const SampleMeta* a, const SampleMeta* b) {
              return a->arrival_seq < b->arrival_seq;
            });
  for (const SampleMeta* s : leftovers) plan.leftover_buffer.push_back(s->id);
  return plan;
}

// Buffer-backed round: atomically snapshots the buffer, packs, removes the
// scheduled samples, and increments the age of everything left behind.
inline MicroBatchPlan pack_round(SampleBuffer& buffer, const PackerConfig& cfg) {
  std::lock_guard<std::mutex> lock(buffer.mu_);
  MicroBatchPlan plan = pack_samples(buffer.samples_, cfg);
  std::unordered_set<std::string> leftover_ids(plan.leftover_buffer.begin(),
                                               plan.leftover_buffer.end());
  std::vector<SampleMeta> kept;
  kept.reserve(leftover_ids.size());
  for (auto& s : buffer.samples_) {
    if (leftover_ids.count(s.id)) {
      s.age += 1;
      kept.push_back(std::move(s));
    } else {
      buffer.ids_.erase(s.id);
    }
  }
  buffer.samples_ = std::move(kept);
  return plan;
}

inline double padding_ratio(const MicroBatchPlan& plan) {
  std::uint64_t cap = 0, used = 0;
  for (const auto& dev : plan.device_batches) {
    for (const auto& st : dev) {
      cap += st.capacity;
      used += st.used_tokens;
    }
  }
  if (cap == 0) return 0.0;
  return static_cast<double>(cap - used) / static_cast<double>(cap);
}

// Padding of the naive baseline that gives every sample its own stream of
// capacity l_max (over-length samples truncate to a full stream).
inline double padded_baseline_ratio(const std::vector<SampleMeta>& samples,
                                    std::uint64_t l_max) {
  if (samples.empty()) return 0.0;
  std::uint64_t used = 0;
  for (const auto& s : samples) used += std::min(s.total_tokens(), l_max);
  const std::uint64_t cap = l_max * static_cast<std::uint64_t>(samples.size());
  return static_cast<double>(cap - used) / static_cast<double>(cap);
}

inline std::uint64_t visual_spread(const MicroBatchPlan& plan) {
  return detail::spread_of(plan.visual_token_total);
}

struct MaskAndPositions {
  std::vector<std::uint64_t> mask_descriptor;      // block lengths
  std::vector<std::uint64_t> position_descriptor;  // per-token positions
};

inline MaskAndPositions mask_and_positions(const PackedStream& stream) {
  MaskAndPositions mp;
  for (const auto& seg : stream.segments) {
    mp.mask_descriptor.push_back(seg.token_count);
    for (std::uint64_t p = 0; p < seg.token_count; ++p) {
      mp.position_descriptor.push_back(p);
    }
  }
  return mp;
}

// Dense boolean expansion of a block-diagonal causal mask: true exactly
// where query and key share a block and key <= query.
inline std::vector<std::vector<bool>> expand_dense_mask(
    const std::vector<std::uint64_t>& block_lengths) {
  std::uint64_t n = 0;
  for (std::uint64_t len : block_lengths) n += len;
  std::vector<std::vector<bool>> mask(n, std::vector<bool>(n, false));
  std::uint64_t base = 0;
  for (std::uint64_t len : block_lengths) {
    for (std::uint64_t q = 0; q < len; ++q) {
      for (std::uint64_t k = 0; k <= q; ++k) {
        mask[base + q][base + k] = true;
      }
    }
    base += len;
  }
  return mask;
}

// --- Text interchange -------------------------------------------------------

// One record per line: id, text_tokens, visual_tokens, modality.
inline SampleMeta parse_sample_line(const std::string& line) {
  const std::vector<std::string> parts = split_fields(line, ',');
  if (parts.size() != 4) {
    throw InvalidInputError("sample record needs 4 fields: " + line);
  }
  SampleMeta s;
  s.id = parts[0];
  s.text_tokens = parse_u64(parts[1], "text_tokens");
  s.visual_tokens = parse_u64(parts[2], "visual_tokens");
  s.modality = modality_from_name(parts[3]);
  validate_sample(s);
  return s;
}

inline std::string sample_to_line(const SampleMeta& s) {
  std::string out = s.id;
  out += ", ";
  out += std::to_string(s.text_tokens);
  out += ", ";
  out += std::to_string(s.visual_tokens);
  out += ", ";
  out += modality_name(s.modality);
  return out;
}

// One stream per line: device, stream_index, [id:len:trunc_flag, ...], padding.
inline std::string plan_to_text(const MicroBatchPlan& plan) {
  std::string out;
  for (std::size_t d = 0; d < plan.device_batches.size(); ++d) {
    for (std::size_t i = 0; i < plan.device_batches[d].size(); ++i) {
      const PackedStream& st = plan.device_batches[d][i];
      out += std::to_string(d);
      out += ", ";
      out += std::to_string(i);
      out += ", [";
      for (std::size_t j = 0; j < st.segments.size(); ++j) {
        if (j > 0) out += ", ";
        out += st.segments[j].sample_id;
        out += ':';
        out += std::to_string(st.segments[j].token_count);
        out += ':';
        out += st.segments[j].truncated ? '1' : '0';
      }
      out += "], ";
      out += std::to_string(st.capacity - st.used_tokens);
      out += '\n';
    }
  }
  return out;
}

}  // namespace trainops::packing

#endif  // TRAINOPS_PACKING_HPP_
