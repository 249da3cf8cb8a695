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

// Batch CLI binding every module: pack, adalrs-sim, curate, reward, soup,
// moe. Each stage reads its inputs, runs deterministically under the given
// seed, writes its outputs, and emits a JSON report (with a config hash) on
// stdout. Exit codes: 0 success, 1 runtime stage error, 2 config error.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trainops/adalrs.hpp"
#include "trainops/curation.hpp"
#include "trainops/errors.hpp"
#include "trainops/landscape.hpp"
#include "trainops/moe.hpp"
#include "trainops/packing.hpp"
#include "trainops/records_io.hpp"
#include "trainops/rewards.hpp"
#include "trainops/rng.hpp"
#include "trainops/soup.hpp"
#include "trainops/textio.hpp"

namespace {

using trainops::Json;

enum class LogLevel { kQuiet, kInfo, kDebug };

LogLevel log_level() {
  const char* v = std::getenv("TRAINOPS_LOG");
  if (v == nullptr) return LogLevel::kInfo;
  const std::string s(v);
  if (s == "quiet") return LogLevel::kQuiet;
  if (s == "debug") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

void log_info(const std::string& msg) {
  if (log_level() != LogLevel::kQuiet) std::cerr << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (log_level() == LogLevel::kDebug) std::cerr << msg << "\n";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// The report carries a hash of the resolved stage configuration so reruns
// can be audited against the exact settings that produced them.
void emit_report(Json& report, const std::string& report_path) {
  const std::string cfg = report.at("config").dump();
  report["config_hash"] = hex64(trainops::fnv1a64(cfg.data(), cfg.size()));
  std::cout << report.dump(2) << "\n";
  if (!report_path.empty()) {
    std::ofstream f(report_path, std::ios::app);
    if (!f) throw trainops::Error("cannot open report file: " + report_path);
    f << report.dump() << "\n";
  }
}

// --- adalrs-sim -----------------------------------------------------------

struct AdalrsSimArgs {
  trainops::adalrs::AdaLrsConfig cfg;
  double e_value = -1.0;  // <0 means auto (baseline slope standard error)
  std::string landscape = "quadratic";
  int dim = 8;
  double condition = 10.0;
  double noise = 0.0;
  int steps = 2000;
  std::uint64_t seed = 1;
  std::string polarity = "faster-descent";
  std::string out;
  std::string report_path;
};

int run_adalrs_sim(const AdalrsSimArgs& a) {
  namespace al = trainops::adalrs;
  al::AdaLrsConfig cfg = a.cfg;
  if (a.e_value >= 0.0) cfg.slope_error_e = a.e_value;
  if (a.polarity == "faster-descent") {
    cfg.polarity = al::SlopePolarity::kFasterDescent;
  } else if (a.polarity == "signed-slope") {
    cfg.polarity = al::SlopePolarity::kSignedSlope;
  } else {
    throw trainops::ConfigError("unknown polarity: " + a.polarity);
  }
  cfg.validate();

  al::LandscapeConfig lc;
  lc.kind = al::landscape_from_name(a.landscape);
  lc.dim = a.dim;
  lc.condition = a.condition;
  lc.noise_sigma = a.noise;
  lc.seed = a.seed;
  const al::SyntheticLossLandscape landscape(lc);
  const al::Trajectory traj = al::run_synthetic_trial(landscape, cfg, a.steps, a.seed);
  trainops::write_text_file(a.out, al::trajectory_to_text(traj));

  std::uint64_t scale_ups = 0, rollbacks = 0;
  for (const auto& r : traj.records) {
    if (r.decision == al::DecisionKind::kScaleUp) ++scale_ups;
    if (r.decision == al::DecisionKind::kRollbackAndScaleDown) ++rollbacks;
  }
  Json report;
  report["stage"] = "adalrs-sim";
  Json cj;
  cj["alpha"] = cfg.alpha;
  cj["beta"] = cfg.beta;
  cj["lambda"] = cfg.lambda;
  cj["window"] = cfg.window_k;
  cj["e"] = cfg.slope_error_e ? Json(*cfg.slope_error_e) : Json("auto");
  cj["lr0"] = cfg.initial_lr;
  cj["max_adjustments"] = cfg.max_adjustments;
  cj["polarity"] = a.polarity;
  cj["landscape"] = a.landscape;
  cj["dim"] = a.dim;
  cj["condition"] = a.condition;
  cj["noise"] = a.noise;
  cj["steps"] = a.steps;
  cj["seed"] = a.seed;
  report["config"] = cj;
  report["records"] = traj.records.size();
  report["final_lr"] = traj.final_lr;
  report["final_loss"] = traj.final_loss;
  report["diverged"] = traj.diverged;
  report["scale_ups"] = scale_ups;
  report["rollbacks"] = rollbacks;
  emit_report(report, a.report_path);
  log_info("adalrs-sim: " + std::to_string(traj.records.size()) + " steps, final lr " +
           trainops::format_double(traj.final_lr));
  return 0;
}

// --- pack -------------------------------------------------------------------

struct PackArgs {
  trainops::packing::PackerConfig cfg;
  std::string input;
  std::string out;
  std::string report_path;
};

int run_pack(const PackArgs& a) {
  namespace pk = trainops::packing;
  a.cfg.validate();
  pk::SampleBuffer buffer;
  for (const auto& line : trainops::read_lines(a.input)) {
    if (line[0] == '#') continue;
    buffer.insert(pk::parse_sample_line(line));
  }
  if (buffer.empty()) throw trainops::InvalidInputError("no samples in " + a.input);

  std::string plan_text;
  Json rounds = Json::array();
  std::uint64_t cap_sum = 0, used_sum = 0;
  std::uint64_t max_observed_age = 0;
  int round = 0;
  while (!buffer.empty()) {
    ++round;
    max_observed_age = std::max<std::uint64_t>(max_observed_age, buffer.max_age());
    // Baseline assignment on the identical snapshot, for the balance report.
    const std::vector<pk::SampleMeta> snapshot = buffer.snapshot();
    const pk::MicroBatchPlan arrival =
        pk::pack_samples(snapshot, a.cfg, pk::AssignmentPolicy::kArrivalOrder);
    const pk::MicroBatchPlan plan = pk::pack_round(buffer, a.cfg);

    plan_text += "# round " + std::to_string(round) + "\n";
    plan_text += pk::plan_to_text(plan);
    for (const auto& dev : plan.device_batches) {
      for (const auto& st : dev) {
        cap_sum += st.capacity;
        used_sum += st.used_tokens;
      }
    }
    Json r;
    r["round"] = round;
    r["padding_ratio"] = pk::padding_ratio(plan);
    r["visual_spread_balanced"] = pk::visual_spread(plan);
    r["visual_spread_arrival"] = pk::visual_spread(arrival);
    r["leftover"] = plan.leftover_buffer.size();
    rounds.push_back(r);
    log_debug("pack round " + std::to_string(round) + ": leftover " +
              std::to_string(plan.leftover_buffer.size()));
  }
  trainops::write_text_file(a.out, plan_text);

  Json report;
  report["stage"] = "pack";
  Json cj;
  cj["lmax"] = a.cfg.l_max;
  cj["devices"] = a.cfg.n_devices;
  cj["streams_per_device"] = a.cfg.streams_per_device;
  cj["amax"] = a.cfg.a_max;
  cj["tau"] = a.cfg.visual_balance_tolerance;
  cj["seed"] = a.cfg.seed;
  cj["input"] = a.input;
  report["config"] = cj;
  report["rounds"] = rounds;
  report["overall_padding_ratio"] =
      cap_sum == 0 ? 0.0
                   : static_cast<double>(cap_sum - used_sum) / static_cast<double>(cap_sum);
  report["max_observed_age"] = max_observed_age;
  report["tolerance_met"] = [&] {
    for (const auto& r : rounds) {
      if (r.at("visual_spread_balanced").get<std::uint64_t>() >
          a.cfg.visual_balance_tolerance) {
        return false;
      }
    }
    return true;
  }();
  emit_report(report, a.report_path);
  log_info("pack: " + std::to_string(round) + " rounds, overall padding " +
           trainops::format_fixed(report["overall_padding_ratio"].get<double>(), 4));
  return 0;
}

// --- curate ----------------------------------------------------------------

struct CurateCommonArgs {
  std::string in;
  std::string out;
  std::string report_path;
};

int run_curate_captions(const CurateCommonArgs& c, const std::string& score_kind) {
  namespace cu = trainops::curation;
  cu::CaptionScoreKind kind;
  if (score_kind == "vir") {
    kind = cu::CaptionScoreKind::kVir;
  } else if (score_kind == "ita") {
    kind = cu::CaptionScoreKind::kIta;
  } else if (score_kind == "both") {
    kind = cu::CaptionScoreKind::kBoth;
  } else {
    throw trainops::ConfigError("unknown score kind: " + score_kind);
  }
  const auto records = trainops::read_caption_records(c.in);
  const auto kept = cu::filter_captions(records, kind);
  trainops::write_caption_records(c.out, kept);
  Json report;
  report["stage"] = "curate-captions";
  report["config"] = Json{{"in", c.in}, {"score_kind", score_kind}};
  report["records_in"] = records.size();
  report["records_out"] = kept.size();
  report["pass_rate"] =
      records.empty() ? 0.0
                      : static_cast<double>(kept.size()) / static_cast<double>(records.size());
  emit_report(report, c.report_path);
  log_info("curate captions: kept " + std::to_string(kept.size()) + "/" +
           std::to_string(records.size()));
  return 0;
}

int run_curate_videos(const CurateCommonArgs& c) {
  const auto records = trainops::read_video_records(c.in);
  const auto kept = trainops::curation::filter_videos(records);
  trainops::write_video_records(c.out, kept);
  Json report;
  report["stage"] = "curate-videos";
  report["config"] = Json{{"in", c.in}};
  report["records_in"] = records.size();
  report["records_out"] = kept.size();
  report["pass_rate"] =
      records.empty() ? 0.0
                      : static_cast<double>(kept.size()) / static_cast<double>(records.size());
  emit_report(report, c.report_path);
  log_info("curate videos: kept " + std::to_string(kept.size()) + "/" +
           std::to_string(records.size()));
  return 0;
}

int run_curate_cot(const CurateCommonArgs& c, bool skip_dedup, double theta, int bins,
                   std::uint64_t seed) {
  namespace cu = trainops::curation;
  const auto records = trainops::read_cot_records(c.in);
  std::vector<cu::CotRecord> stage = records;
  const std::size_t before_dedup = stage.size();
  if (!skip_dedup) stage = cu::dedup_cot(stage);
  const std::size_t after_dedup = stage.size();
  stage = cu::filter_redundant(stage, theta);
  const std::size_t after_redundancy = stage.size();
  if (bins >= 1) stage = cu::length_balance(stage, bins, seed);
  trainops::write_cot_records(c.out, stage);
  Json report;
  report["stage"] = "curate-cot";
  report["config"] = Json{{"in", c.in},
                          {"dedup", !skip_dedup},
                          {"theta", theta},
                          {"bins", bins},
                          {"seed", seed}};
  report["records_in"] = before_dedup;
  report["after_dedup"] = after_dedup;
  report["after_redundancy"] = after_redundancy;
  report["records_out"] = stage.size();
  emit_report(report, c.report_path);
  log_info("curate cot: kept " + std::to_string(stage.size()) + "/" +
           std::to_string(before_dedup));
  return 0;
}

int run_curate_difficulty(const CurateCommonArgs& c) {
  const auto records = trainops::read_attempt_records(c.in);
  const auto kept = trainops::curation::difficulty_filter(records);
  trainops::write_attempt_records(c.out, kept);
  Json report;
  report["stage"] = "curate-difficulty";
  report["config"] = Json{{"in", c.in}};
  report["records_in"] = records.size();
  report["records_out"] = kept.size();
  emit_report(report, c.report_path);
  log_info("curate difficulty: kept " + std::to_string(kept.size()) + "/" +
           std::to_string(records.size()));
  return 0;
}

int run_curate_resample(const CurateCommonArgs& c, const std::string& mode,
                        const std::vector<std::string>& dataset_specs,
                        std::uint64_t total, int n, double cap, std::uint64_t seed) {
  namespace cu = trainops::curation;
  Json report;
  report["stage"] = "curate-resample";
  if (mode == "dataset") {
    std::vector<cu::DatasetSpec> specs;
    for (const auto& s : dataset_specs) {
      const auto parts = trainops::split_fields(s, ':');
      if (parts.size() != 3) {
        throw trainops::ConfigError("dataset spec needs name:size:weight, got " + s);
      }
      cu::DatasetSpec d;
      d.name = parts[0];
      d.size = trainops::parse_u64(parts[1], "dataset size");
      d.weight = trainops::parse_double(parts[2], "dataset weight");
      specs.push_back(std::move(d));
    }
    if (specs.empty()) throw trainops::ConfigError("dataset mode needs --datasets");
    const auto counts = cu::dataset_resample(specs, total, seed);
    Json out;
    for (std::size_t i = 0; i < specs.size(); ++i) out[specs[i].name] = counts[i];
    trainops::write_text_file(c.out, out.dump(2) + "\n");
    report["config"] = Json{{"mode", mode},
                            {"datasets", dataset_specs},
                            {"total", total},
                            {"seed", seed}};
    report["counts"] = out;
  } else if (mode == "ngram") {
    std::vector<cu::NgramRecord> records;
    std::size_t line_no = 0;
    for (const auto& line : trainops::read_lines(c.in)) {
      ++line_no;
      const Json j = trainops::parse_json_line(line, line_no, c.in);
      cu::NgramRecord r;
      const std::string where = c.in + ":" + std::to_string(line_no);
      r.id = trainops::require_field<std::string>(j, "id", where);
      r.tokens = trainops::require_field<std::vector<std::string>>(j, "tokens", where);
      records.push_back(std::move(r));
    }
    const auto res = cu::ngram_resample(records, static_cast<std::size_t>(n), cap, seed);
    std::string body;
    for (const auto& id : res.kept_ids) body += id + "\n";
    trainops::write_text_file(c.out, body);
    report["config"] =
        Json{{"mode", mode}, {"in", c.in}, {"n", n}, {"cap", cap}, {"seed", seed}};
    report["records_in"] = records.size();
    report["records_out"] = res.kept_ids.size();
    report["dropped"] = res.dropped_ids.size();
    report["df_cap"] = res.df_cap;
  } else {
    throw trainops::ConfigError("unknown resample mode: " + mode);
  }
  emit_report(report, c.report_path);
  return 0;
}

// --- reward -------------------------------------------------------------------

int run_reward(const std::string& weights_csv, const std::string& in,
               const std::string& out, const std::string& report_path) {
  namespace rw = trainops::rewards;
  const auto parts = trainops::split_fields(weights_csv, ',');
  if (parts.size() != 3) {
    throw trainops::ConfigError("--weights needs three comma-separated values a,t,f");
  }
  rw::RewardWeights w;
  w.w_answer = trainops::parse_double(parts[0], "answer weight");
  w.w_think = trainops::parse_double(parts[1], "think weight");
  w.w_format = trainops::parse_double(parts[2], "format weight");
  w.validate();

  const auto records = trainops::read_reward_records(in);
  std::string body;
  double mixed_sum = 0.0;
  std::uint64_t format_hits = 0, answer_hits = 0;
  for (const auto& rec : records) {
    const rw::RolloutOutput ro = rw::parse_rollout(rec.raw_text);
    const int format_r = rw::format_reward(ro);
    const int answer_r = rw::answer_reward(ro, rec.gold);
    const double mixed = rw::mixed_reward(answer_r, rec.think_r, format_r, w);
    format_hits += format_r;
    answer_hits += answer_r;
    mixed_sum += mixed;
    Json j;
    j["id"] = rec.id;
    j["raw_text"] = rec.raw_text;
    j["gold"] = rec.gold;
    j["think_r"] = rec.think_r;
    j["answer_r"] = answer_r;
    j["format_r"] = format_r;
    j["mixed_reward"] = mixed;
    body += j.dump() + "\n";
  }
  trainops::write_text_file(out, body);
  trainops::write_schema_manifest(out, "reward",
                                  {{"id", "string"},
                                   {"raw_text", "string"},
                                   {"gold", "string"},
                                   {"think_r", "int 0|1 (external judge)"},
                                   {"answer_r", "int 0|1"},
                                   {"format_r", "int 0|1"},
                                   {"mixed_reward", "real in [0,1]"}});
  Json report;
  report["stage"] = "reward";
  report["config"] = Json{{"weights", weights_csv}, {"in", in}};
  report["records"] = records.size();
  report["format_pass"] = format_hits;
  report["answer_pass"] = answer_hits;
  report["mean_mixed_reward"] =
      records.empty() ? 0.0 : mixed_sum / static_cast<double>(records.size());
  emit_report(report, report_path);
  log_info("reward: scored " + std::to_string(records.size()) + " rollouts");
  return 0;
}

// --- soup ---------------------------------------------------------------------

int run_soup_merge(const std::vector<std::string>& model_paths, const std::string& out,
                   bool force, const std::string& report_path) {
  namespace sp = trainops::soup;
  if (model_paths.size() < 2) {
    throw trainops::ConfigError("soup merge needs at least two --models");
  }
  std::vector<sp::ParameterSet> models;
  for (const auto& p : model_paths) models.push_back(sp::read_parameter_set(p));
  const bool homogeneous = sp::check_homogeneous(models);
  const sp::ParameterSet merged = sp::merge(models, force);
  sp::write_parameter_set(out, merged);
  Json report;
  report["stage"] = "soup-merge";
  report["config"] = Json{{"models", model_paths}, {"force", force}};
  report["homogeneous"] = homogeneous;
  report["lineage"] = merged.lineage;
  report["step_count"] = merged.step_count;
  report["tensors"] = merged.tensors.size();
  report["checksum"] = hex64(sp::parameter_set_checksum(merged));
  emit_report(report, report_path);
  log_info("soup: merged " + std::to_string(model_paths.size()) + " models -> " + out);
  return 0;
}

// --- moe ----------------------------------------------------------------------

std::vector<trainops::moe::RoutingTrace> load_traces(const std::string& path,
                                                     int experts) {
  std::vector<trainops::moe::RoutingTrace> traces;
  for (const auto& line : trainops::read_lines(path)) {
    if (line[0] == '#') continue;
    trainops::moe::parse_trace_line(line, experts, traces);
  }
  if (traces.empty()) throw trainops::InvalidInputError("no trace records in " + path);
  return traces;
}

int run_moe_stats(const std::string& in, int experts, const std::string& out,
                  const std::string& report_path) {
  namespace me = trainops::moe;
  const auto traces = load_traces(in, experts);
  const me::ExpertStats stats = me::average_across_ranks(traces);
  Json result;
  result["n_experts"] = stats.n_experts;
  result["tokens"] = stats.token_count;
  result["ranks"] = traces.size();
  result["assign_frac"] = stats.assign_frac;
  result["mean_gate"] = stats.mean_gate;
  result["load_balance_loss"] = me::load_balance_loss_from_stats(stats);
  result["activation_entropy"] = me::activation_entropy(stats.assign_frac);
  if (!out.empty()) trainops::write_text_file(out, result.dump(2) + "\n");
  Json report;
  report["stage"] = "moe-stats";
  report["config"] = Json{{"in", in}, {"experts", experts}};
  report["result"] = result;
  emit_report(report, report_path);
  return 0;
}

int run_moe_calibrate(const std::vector<std::string>& ins, int experts, int budget,
                      const std::string& out, const std::string& report_path) {
  namespace me = trainops::moe;
  if (ins.empty()) throw trainops::ConfigError("moe calibrate needs --in trace files");
  std::vector<std::vector<double>> usage;
  for (const auto& path : ins) {
    const auto traces = load_traces(path, experts);
    usage.push_back(me::average_across_ranks(traces).assign_frac);
  }
  const me::MixtureWeights weights = me::calibrate_mixture(usage, budget);
  const std::vector<double> uniform(usage.size(), 1.0 / static_cast<double>(usage.size()));
  Json result;
  result["weights"] = weights.weights;
  result["blended_entropy"] =
      me::activation_entropy(me::blend_usage(usage, weights.weights));
  result["uniform_entropy"] = me::activation_entropy(me::blend_usage(usage, uniform));
  if (!out.empty()) trainops::write_text_file(out, result.dump(2) + "\n");
  Json report;
  report["stage"] = "moe-calibrate";
  report["config"] = Json{{"in", ins}, {"experts", experts}, {"budget", budget}};
  report["result"] = result;
  emit_report(report, report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training-pipeline toolkit: packing, lr search, curation, rewards, "
               "model soup, MoE balance"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "INI config file; keys under a [subcommand] section set its flags, "
                 "command-line flags win");
  std::string report_path;
  app.add_option("--report", report_path, "append the JSON report to this file");

  // adalrs-sim
  AdalrsSimArgs aa;
  CLI::App* sim = app.add_subcommand("adalrs-sim", "learning-rate search on a synthetic landscape");
  sim->fallthrough();
  sim->add_option("--alpha", aa.cfg.alpha, "up-scaling numerator (co-prime with beta)");
  sim->add_option("--beta", aa.cfg.beta, "down-scaling denominator");
  sim->add_option("--lambda", aa.cfg.lambda, "per-trial decay of the scale factors");
  sim->add_option("--window", aa.cfg.window_k, "losses per slope window");
  sim->add_option("--e", aa.e_value, "slope-comparison margin (default: auto)");
  sim->add_option("--lr0", aa.cfg.initial_lr, "initial learning rate");
  sim->add_option("--max-adjustments", aa.cfg.max_adjustments, "committed scalings before stopping");
  sim->add_option("--steps", aa.steps, "training steps");
  sim->add_option("--seed", aa.seed, "seed for landscape and trainer");
  sim->add_option("--landscape", aa.landscape, "quadratic|rosenbrock|logsumexp");
  sim->add_option("--dim", aa.dim, "landscape dimension");
  sim->add_option("--condition", aa.condition, "quadratic curvature spread");
  sim->add_option("--noise", aa.noise, "gradient noise sigma");
  sim->add_option("--polarity", aa.polarity, "faster-descent|signed-slope");
  sim->add_option("--out", aa.out, "trajectory output path")->required();

  // pack
  PackArgs pa;
  CLI::App* pack = app.add_subcommand("pack", "pack samples into token streams");
  pack->fallthrough();
  pack->add_option("--lmax", pa.cfg.l_max, "stream capacity in tokens");
  pack->add_option("--devices", pa.cfg.n_devices, "simulated device count");
  pack->add_option("--streams-per-device", pa.cfg.streams_per_device, "stream slots per device");
  pack->add_option("--amax", pa.cfg.a_max, "age bound forcing inclusion");
  pack->add_option("--tau", pa.cfg.visual_balance_tolerance, "visual spread tolerance (0 = minimize)");
  pack->add_option("--seed", pa.cfg.seed, "seed recorded with the plan");
  pack->add_option("--input", pa.input, "sample records, one per line")
      ->required()
      ->check(CLI::ExistingFile);
  pack->add_option("--out", pa.out, "plan output path")->required();

  // curate
  CLI::App* curate = app.add_subcommand("curate", "data curation stages");
  curate->fallthrough();
  curate->require_subcommand(1);

  CurateCommonArgs cap_args;
  std::string cap_kind = "both";
  CLI::App* cap = curate->add_subcommand("captions", "caption score/judge gate");
  cap->fallthrough();
  cap->add_option("--in", cap_args.in, "caption records (JSONL)")->required()->check(CLI::ExistingFile);
  cap->add_option("--out", cap_args.out, "kept records output")->required();
  cap->add_option("--score-kind", cap_kind, "vir|ita|both");

  CurateCommonArgs vid_args;
  CLI::App* vid = curate->add_subcommand("videos", "video metric gate");
  vid->fallthrough();
  vid->add_option("--in", vid_args.in, "video records (JSONL)")->required()->check(CLI::ExistingFile);
  vid->add_option("--out", vid_args.out, "kept records output")->required();

  CurateCommonArgs cot_args;
  bool cot_skip_dedup = false;
  double cot_theta = trainops::curation::kDefaultRedundancyTheta;
  int cot_bins = 0;
  std::uint64_t cot_seed = 0;
  CLI::App* cot = curate->add_subcommand("cot", "chain-of-thought hygiene pipeline");
  cot->fallthrough();
  cot->add_option("--in", cot_args.in, "cot records (JSONL)")->required()->check(CLI::ExistingFile);
  cot->add_option("--out", cot_args.out, "kept records output")->required();
  cot->add_flag("--skip-dedup", cot_skip_dedup, "keep duplicate (image, question) pairs");
  cot->add_option("--theta", cot_theta, "redundancy removal threshold");
  cot->add_option("--bins", cot_bins, "length-balance bins (0 = off)");
  cot->add_option("--seed", cot_seed, "length-balance sampling seed");

  CurateCommonArgs diff_args;
  CLI::App* diff = curate->add_subcommand("difficulty", "pass@k difficulty gate");
  diff->fallthrough();
  diff->add_option("--in", diff_args.in, "attempt records (JSONL)")->required()->check(CLI::ExistingFile);
  diff->add_option("--out", diff_args.out, "kept records output")->required();

  CurateCommonArgs rs_args;
  std::string rs_mode = "dataset";
  std::vector<std::string> rs_datasets;
  std::uint64_t rs_total = 0;
  int rs_n = 3;
  double rs_cap = 0.5;
  std::uint64_t rs_seed = 0;
  CLI::App* rs = curate->add_subcommand("resample", "dataset- or n-gram-level resampling");
  rs->fallthrough();
  rs->add_option("--mode", rs_mode, "dataset|ngram");
  rs->add_option("--in", rs_args.in, "token records (JSONL, ngram mode)");
  rs->add_option("--out", rs_args.out, "output path")->required();
  rs->add_option("--datasets", rs_datasets, "name:size:weight triples")->delimiter(',');
  rs->add_option("--total", rs_total, "total draws (dataset mode)");
  rs->add_option("--n", rs_n, "n-gram order");
  rs->add_option("--cap", rs_cap, "document-frequency cap percentile in (0,1]");
  rs->add_option("--seed", rs_seed, "seed recorded with the run");

  // reward
  std::string rw_weights = "0.7,0.2,0.1";
  std::string rw_in, rw_out;
  CLI::App* reward = app.add_subcommand("reward", "score rollouts with mixed rewards");
  reward->fallthrough();
  reward->add_option("--weights", rw_weights, "answer,think,format weights (sum 1)");
  reward->add_option("--in", rw_in, "rollout records (JSONL)")->required()->check(CLI::ExistingFile);
  reward->add_option("--out", rw_out, "scored records output")->required();

  // soup
  std::vector<std::string> soup_models;
  std::string soup_out;
  bool soup_force = false;
  CLI::App* soup_cmd = app.add_subcommand("soup", "model parameter soup");
  soup_cmd->fallthrough();
  soup_cmd->require_subcommand(1);
  CLI::App* soup_merge_cmd = soup_cmd->add_subcommand("merge", "average parameter sets");
  soup_merge_cmd->fallthrough();
  soup_merge_cmd->add_option("--models", soup_models, "container paths")->delimiter(',')->required();
  soup_merge_cmd->add_option("--out", soup_out, "merged container path")->required();
  soup_merge_cmd->add_flag("--force", soup_force, "merge despite heterogeneous lineage");

  // moe
  CLI::App* moe_cmd = app.add_subcommand("moe", "expert balance analysis");
  moe_cmd->fallthrough();
  moe_cmd->require_subcommand(1);
  std::string moe_in, moe_out;
  int moe_experts = 0;
  CLI::App* moe_stats_cmd = moe_cmd->add_subcommand("stats", "routing balance statistics");
  moe_stats_cmd->fallthrough();
  moe_stats_cmd->add_option("--in", moe_in, "routing trace file")->required()->check(CLI::ExistingFile);
  moe_stats_cmd->add_option("--experts", moe_experts, "expert count E")->required();
  moe_stats_cmd->add_option("--out", moe_out, "stats JSON output");

  std::vector<std::string> moe_cal_ins;
  std::string moe_cal_out;
  int moe_cal_experts = 0;
  int moe_cal_budget = 10000;
  CLI::App* moe_cal_cmd = moe_cmd->add_subcommand("calibrate", "entropy-maximizing mixture weights");
  moe_cal_cmd->fallthrough();
  moe_cal_cmd->add_option("--in", moe_cal_ins, "per-dataset probe trace files")
      ->delimiter(',')
      ->required();
  moe_cal_cmd->add_option("--experts", moe_cal_experts, "expert count E")->required();
  moe_cal_cmd->add_option("--budget", moe_cal_budget, "candidate evaluations");
  moe_cal_cmd->add_option("--out", moe_cal_out, "weights JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) {
      aa.report_path = report_path;
      return run_adalrs_sim(aa);
    }
    if (pack->parsed()) {
      pa.report_path = report_path;
      return run_pack(pa);
    }
    if (curate->parsed()) {
      if (cap->parsed()) {
        cap_args.report_path = report_path;
        return run_curate_captions(cap_args, cap_kind);
      }
      if (vid->parsed()) {
        vid_args.report_path = report_path;
        return run_curate_videos(vid_args);
      }
      if (cot->parsed()) {
        cot_args.report_path = report_path;
        return run_curate_cot(cot_args, cot_skip_dedup, cot_theta, cot_bins, cot_seed);
      }
      if (diff->parsed()) {
        diff_args.report_path = report_path;
        return run_curate_difficulty(diff_args);
      }
      if (rs->parsed()) {
        rs_args.report_path = report_path;
        return run_curate_resample(rs_args, rs_mode, rs_datasets, rs_total, rs_n,
                                   rs_cap, rs_seed);
      }
    }
    if (reward->parsed()) {
      return run_reward(rw_weights, rw_in, rw_out, report_path);
    }
    if (soup_cmd->parsed() && soup_merge_cmd->parsed()) {
      return run_soup_merge(soup_models, soup_out, soup_force, report_path);
    }
    if (moe_cmd->parsed()) {
      if (moe_stats_cmd->parsed()) {
        return run_moe_stats(moe_in, moe_experts, moe_out, report_path);
      }
      if (moe_cal_cmd->parsed()) {
        return run_moe_calibrate(moe_cal_ins, moe_cal_experts, moe_cal_budget,
                                 moe_cal_out, report_path);
      }
    }
    std::cerr << "no stage selected\n";
    return 2;
  } catch (const trainops::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const trainops::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
