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

// Model-soup merging: uniform elementwise averaging of parameter sets,
// gated on lineage homogeneity, plus the on-disk parameter container.
//
// Merge arithmetic is pinned down so independent implementations agree to
// the last bit: for each element, the values are sorted ascending (ties by
// model index), summed in double (f32 tensors) or long double (f64),
// divided by the model count, rounded to the storage dtype, and clamped to
// the [min, max] envelope of the inputs. Sorting first makes the result
// independent of model order.

#ifndef TRAINOPS_SOUP_HPP_
#define TRAINOPS_SOUP_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "trainops/errors.hpp"
#include "trainops/rng.hpp"

namespace trainops::soup {

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

inline const char* dtype_name(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

inline DType dtype_from_code(std::uint8_t code) {
  if (code == 0) return DType::kF32;
  if (code == 1) return DType::kF64;
  throw InvalidInputError("unknown dtype code: " + std::to_string(code));
}

struct Tensor {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> shape;
  std::vector<float> f32;   // populated when dtype == kF32
  std::vector<double> f64;  // populated when dtype == kF64

  std::uint64_t elem_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t s : shape) n *= s;
    return shape.empty() ? 0 : n;
  }

  void validate() const {
    const std::uint64_t n = elem_count();
    const std::uint64_t have = dtype == DType::kF32 ? f32.size() : f64.size();
    if (have != n) {
      throw InvalidInputError("tensor " + name + ": shape/payload mismatch");
    }
  }
};

struct ParameterSet {
  std::map<std::string, Tensor> tensors;  // keyed and iterated by name
  std::string lineage;  // fingerprint of hyperparameters + data composition
  std::uint64_t step_count = 0;

  void validate() const {
    for (const auto& [name, t] : tensors) {
      if (name != t.name) throw InvalidInputError("tensor key/name mismatch: " + name);
      t.validate();
    }
  }
};

// True iff all lineage fingerprints are equal and every model carries the
// identical tensor name/shape/dtype set.
inline bool check_homogeneous(const std::vector<ParameterSet>& models) {
  if (models.size() < 2) throw InvalidInputError("check_homogeneous: need >= 2 models");
  const ParameterSet& ref = models[0];
  for (const auto& m : models) {
    if (m.lineage != ref.lineage) return false;
    if (m.tensors.size() != ref.tensors.size()) return false;
    for (const auto& [name, t] : ref.tensors) {
      auto it = m.tensors.find(name);
      if (it == m.tensors.end()) return false;
      if (it->second.shape != t.shape || it->second.dtype != t.dtype) return false;
    }
  }
  return true;
}

namespace detail {

template <typename T, typename Acc>
inline T mean_element(std::vector<T>& scratch) {
  std::sort(scratch.begin(), scratch.end());
  Acc sum = 0;
  for (T v : scratch) sum += static_cast<Acc>(v);
  T m = static_cast<T>(sum / static_cast<Acc>(scratch.size()));
  m = std::max(m, scratch.front());
  m = std::min(m, scratch.back());
  return m;
}

inline std::string lineage_diff(const std::vector<ParameterSet>& models) {
  std::set<std::string> distinct;
  for (const auto& m : models) distinct.insert(m.lineage);
  std::string out;
  for (const auto& l : distinct) {
    if (!out.empty()) out += " vs ";
    out += "'" + l + "'";
  }
  return out;
}

}  // namespace detail

// Uniform parameter average. Heterogeneous lineages are rejected unless
// force is set; mismatched tensor names/shapes are fatal regardless of
// force. The merged lineage is the common one, or the sorted distinct
// lineages joined by '+' under force; step_count is the max of the inputs.
inline ParameterSet merge(const std::vector<ParameterSet>& models, bool force = false) {
  if (models.size() < 2) throw InvalidInputError("merge: need >= 2 models");
  for (const auto& m : models) m.validate();
  const ParameterSet& ref = models[0];
  for (const auto& m : models) {
    if (m.tensors.size() != ref.tensors.size()) {
      throw InvalidInputError("merge: tensor sets differ in size");
    }
    for (const auto& [name, t] : ref.tensors) {
      auto it = m.tensors.find(name);
      if (it == m.tensors.end()) {
        throw InvalidInputError("merge: tensor " + name + " missing from a model");
      }
      if (it->second.shape != t.shape) {
        throw InvalidInputError("merge: shape mismatch on tensor " + name);
      }
      if (it->second.dtype != t.dtype) {
        throw InvalidInputError("merge: dtype mismatch on tensor " + name);
      }
    }
  }
  if (!check_homogeneous(models) && !force) {
    throw InvalidInputError("merge: heterogeneous lineages (" +
                            detail::lineage_diff(models) +
                            "); pass force to merge anyway");
  }

  ParameterSet out;
  if (check_homogeneous(models)) {
    out.lineage = ref.lineage;
  } else {
    std::set<std::string> distinct;
    for (const auto& m : models) distinct.insert(m.lineage);
    for (const auto& l : distinct) {
      if (!out.lineage.empty()) out.lineage += '+';
      out.lineage += l;
    }
  }
  for (const auto& m : models) out.step_count = std::max(out.step_count, m.step_count);

  const std::size_t n = models.size();
  for (const auto& [name, rt] : ref.tensors) {
    Tensor t;
    t.name = name;
    t.dtype = rt.dtype;
    t.shape = rt.shape;
    const std::uint64_t count = rt.elem_count();
    if (rt.dtype == DType::kF32) {
      t.f32.resize(count);
      std::vector<float> scratch(n);
      for (std::uint64_t i = 0; i < count; ++i) {
        for (std::size_t m = 0; m < n; ++m) {
          scratch[m] = models[m].tensors.at(name).f32[i];
        }
        t.f32[i] = detail::mean_element<float, double>(scratch);
      }
    } else {
      t.f64.resize(count);
      std::vector<double> scratch(n);
      for (std::uint64_t i = 0; i < count; ++i) {
        for (std::size_t m = 0; m < n; ++m) {
          scratch[m] = models[m].tensors.at(name).f64[i];
        }
        t.f64[i] = detail::mean_element<double, long double>(scratch);
      }
    }
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

// --- Container format --------------------------------------------------------
//
// Little-endian binary layout:
//   magic   8 bytes  "TOPSOUP\0"
//   version u32      currently 1
//   count   u32      number of tensor records
// then per tensor, in file order:
//   name_len u32, name bytes (UTF-8, no terminator)
//   dtype    u8   (0 = f32, 1 = f64)
//   ndim     u32, shape u64 * ndim
//   payload  IEEE-754 little-endian, elem_count * dtype size bytes
// A JSON manifest sidecar at <path>.manifest.json carries lineage,
// step_count, and the tensor table.

inline constexpr char kSoupMagic[8] = {'T', 'O', 'P', 'S', 'O', 'U', 'P', '\0'};
inline constexpr std::uint32_t kSoupVersion = 1;

namespace detail {

inline void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 4);
}

inline void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.append(b, 8);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& what)
      : data_(data), what_(what) {}

  void raw(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw InvalidInputError(what_ + ": truncated container");
    }
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), n,
                static_cast<char*>(p));
    pos_ += n;
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    raw(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint8_t b[8];
    raw(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }

  std::uint8_t u8() {
    std::uint8_t b = 0;
    raw(&b, 1);
    return b;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_parameter_set(const ParameterSet& ps) {
  ps.validate();
  std::string out;
  detail::put_bytes(out, kSoupMagic, 8);
  detail::put_u32(out, kSoupVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(ps.tensors.size()));
  for (const auto& [name, t] : ps.tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    detail::put_bytes(out, name.data(), name.size());
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(t.dtype)));
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint64_t s : t.shape) detail::put_u64(out, s);
    if (t.dtype == DType::kF32) {
      for (float v : t.f32) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      for (double v : t.f64) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

inline ParameterSet deserialize_parameter_set(const std::string& bytes,
                                              const std::string& what) {
  detail::ByteReader r(bytes, what);
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, kSoupMagic)) {
    throw InvalidInputError(what + ": bad container magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kSoupVersion) {
    throw InvalidInputError(what + ": unsupported container version " +
                            std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParameterSet ps;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const std::uint32_t name_len = r.u32();
    t.name.resize(name_len);
    r.raw(t.name.data(), name_len);
    t.dtype = dtype_from_code(r.u8());
    const std::uint32_t ndim = r.u32();
    t.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape[d] = r.u64();
    const std::uint64_t n = t.elem_count();
    if (t.dtype == DType::kF32) {
      t.f32.resize(n);
      for (std::uint64_t e = 0; e < n; ++e) {
        t.f32[e] = std::bit_cast<float>(r.u32());
      }
    } else {
      t.f64.resize(n);
      for (std::uint64_t e = 0; e < n; ++e) {
        t.f64[e] = std::bit_cast<double>(r.u64());
      }
    }
    std::string key = t.name;
    if (!ps.tensors.emplace(std::move(key), std::move(t)).second) {
      throw InvalidInputError(what + ": duplicate tensor name in container");
    }
  }
  if (!r.done()) throw InvalidInputError(what + ": trailing bytes in container");
  ps.validate();
  return ps;
}

inline std::string manifest_path_for(const std::string& container_path) {
  return container_path + ".manifest.json";
}

inline void write_parameter_set(const std::string& path, const ParameterSet& ps) {
  {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for write: " + path);
    const std::string bytes = serialize_parameter_set(ps);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + path);
  }
  nlohmann::ordered_json manifest;
  manifest["lineage"] = ps.lineage;
  manifest["step_count"] = ps.step_count;
  manifest["tensor_count"] = ps.tensors.size();
  auto& table = manifest["tensors"];
  table = nlohmann::ordered_json::array();
  for (const auto& [name, t] : ps.tensors) {
    nlohmann::ordered_json row;
    row["name"] = name;
    row["dtype"] = dtype_name(t.dtype);
    row["shape"] = t.shape;
    table.push_back(row);
  }
  std::ofstream mf(manifest_path_for(path));
  if (!mf) throw Error("cannot open for write: " + manifest_path_for(path));
  mf << manifest.dump(2) << '\n';
}

inline ParameterSet read_parameter_set(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInputError("cannot open model container: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  ParameterSet ps = deserialize_parameter_set(bytes, path);
  std::ifstream mf(manifest_path_for(path));
  if (mf) {
    nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, true);
    ps.lineage = manifest.value("lineage", std::string());
    ps.step_count = manifest.value("step_count", std::uint64_t{0});
  }
  return ps;
}

// FNV-1a over the serialized container; used in reports as the merged-model
// checksum.
inline std::uint64_t parameter_set_checksum(const ParameterSet& ps) {
  const std::string bytes = serialize_parameter_set(ps);
  return fnv1a64(bytes.data(), bytes.size());
}

}  // namespace trainops::soup

#endif  // TRAINOPS_SOUP_HPP_
