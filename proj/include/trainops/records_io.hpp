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

// Line-delimited JSON interchange for curation and reward records, with a
// schema manifest sidecar written next to every output corpus. Field order
// is fixed (ordered_json) so identical inputs produce byte-identical files.

#ifndef TRAINOPS_RECORDS_IO_HPP_
#define TRAINOPS_RECORDS_IO_HPP_

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trainops/curation.hpp"
#include "trainops/errors.hpp"

namespace trainops {

using Json = nlohmann::ordered_json;

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInputError("cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    lines.push_back(line);
  }
  return lines;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for write: " + path);
  f << content;
  if (!f) throw Error("write failed: " + path);
}

inline Json parse_json_line(const std::string& line, std::size_t line_no,
                            const std::string& path) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw InvalidInputError(path + ":" + std::to_string(line_no) +
                            ": malformed JSON record");
  }
  return j;
}

template <typename T>
inline T require_field(const Json& j, const std::string& field,
                       const std::string& where) {
  if (!j.contains(field)) {
    throw InvalidInputError(where + ": missing field '" + field + "'");
  }
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidInputError(where + ": field '" + field + "' has wrong type");
  }
}

// Schema manifest sidecar: <out>.schema.json describing the record layout.
inline void write_schema_manifest(
    const std::string& out_path, const std::string& record_name,
    const std::vector<std::pair<std::string, std::string>>& fields) {
  Json schema;
  schema["record"] = record_name;
  Json f;
  for (const auto& [name, type] : fields) f[name] = type;
  schema["fields"] = f;
  write_text_file(out_path + ".schema.json", schema.dump(2) + "\n");
}

// --- Caption records ----------------------------------------------------------

inline Json to_json(const curation::CaptionRecord& r) {
  Json j;
  j["id"] = r.id;
  j["caption_text"] = r.caption_text;
  j["vir_score"] = r.vir_score;
  j["ita_score"] = r.ita_score;
  j["yes_no_judge"] = curation::judge_name(r.yes_no_judge);
  return j;
}

inline curation::CaptionRecord caption_from_json(const Json& j, const std::string& where) {
  curation::CaptionRecord r;
  r.id = require_field<std::string>(j, "id", where);
  r.caption_text = j.value("caption_text", std::string());
  r.vir_score = require_field<int>(j, "vir_score", where);
  r.ita_score = require_field<int>(j, "ita_score", where);
  r.yes_no_judge = curation::judge_from_name(j.value("yes_no_judge", std::string("Missing")));
  curation::validate_caption(r);
  return r;
}

inline std::vector<curation::CaptionRecord> read_caption_records(const std::string& path) {
  std::vector<curation::CaptionRecord> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    out.push_back(caption_from_json(parse_json_line(line, n, path),
                                    path + ":" + std::to_string(n)));
  }
  return out;
}

inline void write_caption_records(const std::string& path,
                                  const std::vector<curation::CaptionRecord>& records) {
  std::string body;
  for (const auto& r : records) body += to_json(r).dump() + "\n";
  write_text_file(path, body);
  write_schema_manifest(path, "caption",
                        {{"id", "string"},
                         {"caption_text", "string"},
                         {"vir_score", "int (-1 or 1..5)"},
                         {"ita_score", "int (-1 or 1..5)"},
                         {"yes_no_judge", "enum Yes|No|Missing"}});
}

// --- Video records --------------------------------------------------------------

inline Json to_json(const curation::VideoRecord& r) {
  Json j;
  j["id"] = r.id;
  j["alignment"] = r.alignment;
  j["richness"] = r.richness;
  j["difficulty"] = r.difficulty;
  return j;
}

inline curation::VideoRecord video_from_json(const Json& j, const std::string& where) {
  curation::VideoRecord r;
  r.id = require_field<std::string>(j, "id", where);
  r.alignment = require_field<int>(j, "alignment", where);
  r.richness = require_field<int>(j, "richness", where);
  r.difficulty = require_field<int>(j, "difficulty", where);
  curation::validate_video(r);
  return r;
}

inline std::vector<curation::VideoRecord> read_video_records(const std::string& path) {
  std::vector<curation::VideoRecord> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    out.push_back(video_from_json(parse_json_line(line, n, path),
                                  path + ":" + std::to_string(n)));
  }
  return out;
}

inline void write_video_records(const std::string& path,
                                const std::vector<curation::VideoRecord>& records) {
  std::string body;
  for (const auto& r : records) body += to_json(r).dump() + "\n";
  write_text_file(path, body);
  write_schema_manifest(path, "video",
                        {{"id", "string"},
                         {"alignment", "int (-1 or 0..10)"},
                         {"richness", "int (-1 or 0..7)"},
                         {"difficulty", "int (-1 or 0..8)"}});
}

// --- CoT records -----------------------------------------------------------------

inline Json to_json(const curation::CotRecord& r) {
  Json j;
  j["id"] = r.id;
  j["image_key"] = r.image_key;
  j["question"] = r.question;
  j["think_text"] = r.think_text;
  j["answer_text"] = r.answer_text;
  j["record_kind"] = curation::record_kind_name(r.record_kind);
  j["cot_token_len"] = r.cot_token_len;
  return j;
}

inline curation::CotRecord cot_from_json(const Json& j, const std::string& where) {
  curation::CotRecord r;
  r.id = require_field<std::string>(j, "id", where);
  r.image_key = require_field<std::string>(j, "image_key", where);
  r.question = require_field<std::string>(j, "question", where);
  r.think_text = j.value("think_text", std::string());
  r.answer_text = j.value("answer_text", std::string());
  r.record_kind = curation::record_kind_from_name(
      require_field<std::string>(j, "record_kind", where));
  r.cot_token_len = j.value("cot_token_len", std::uint64_t{0});
  curation::validate_cot_record(r);
  return r;
}

inline std::vector<curation::CotRecord> read_cot_records(const std::string& path) {
  std::vector<curation::CotRecord> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    out.push_back(cot_from_json(parse_json_line(line, n, path),
                                path + ":" + std::to_string(n)));
  }
  return out;
}

inline void write_cot_records(const std::string& path,
                              const std::vector<curation::CotRecord>& records) {
  std::string body;
  for (const auto& r : records) body += to_json(r).dump() + "\n";
  write_text_file(path, body);
  write_schema_manifest(path, "cot",
                        {{"id", "string"},
                         {"image_key", "string (content hash)"},
                         {"question", "string"},
                         {"think_text", "string"},
                         {"answer_text", "string"},
                         {"record_kind", "enum Direct|CoT"},
                         {"cot_token_len", "uint"}});
}

// --- Attempt records ----------------------------------------------------------------

inline Json to_json(const curation::AttemptRecord& r) {
  Json j;
  j["id"] = r.id;
  j["attempts"] = r.attempts;
  j["reasoning_heavy"] = r.reasoning_heavy;
  return j;
}

inline curation::AttemptRecord attempt_from_json(const Json& j, const std::string& where) {
  curation::AttemptRecord r;
  r.id = require_field<std::string>(j, "id", where);
  r.attempts = require_field<std::vector<bool>>(j, "attempts", where);
  r.reasoning_heavy = require_field<bool>(j, "reasoning_heavy", where);
  if (r.attempts.empty()) {
    throw InvalidInputError(where + ": attempts must be non-empty");
  }
  return r;
}

inline std::vector<curation::AttemptRecord> read_attempt_records(const std::string& path) {
  std::vector<curation::AttemptRecord> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    out.push_back(attempt_from_json(parse_json_line(line, n, path),
                                    path + ":" + std::to_string(n)));
  }
  return out;
}

inline void write_attempt_records(const std::string& path,
                                  const std::vector<curation::AttemptRecord>& records) {
  std::string body;
  for (const auto& r : records) body += to_json(r).dump() + "\n";
  write_text_file(path, body);
  write_schema_manifest(path, "attempt",
                        {{"id", "string"},
                         {"attempts", "array of bool, length k"},
                         {"reasoning_heavy", "bool"}});
}

// --- Reward batch records ---------------------------------------------------------------

struct RewardRecord {
  std::string id;
  std::string raw_text;
  std::string gold;
  int think_r = 0;  // external judge bit
};

inline RewardRecord reward_record_from_json(const Json& j, const std::string& where) {
  RewardRecord r;
  r.id = j.value("id", std::string());
  r.raw_text = require_field<std::string>(j, "raw_text", where);
  r.gold = require_field<std::string>(j, "gold", where);
  r.think_r = j.value("think_r", 0);
  if (r.think_r != 0 && r.think_r != 1) {
    throw InvalidInputError(where + ": think_r must be 0 or 1");
  }
  return r;
}

inline std::vector<RewardRecord> read_reward_records(const std::string& path) {
  std::vector<RewardRecord> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    out.push_back(reward_record_from_json(parse_json_line(line, n, path),
                                          path + ":" + std::to_string(n)));
  }
  return out;
}

}  // namespace trainops

#endif  // TRAINOPS_RECORDS_IO_HPP_
