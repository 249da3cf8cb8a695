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

#ifndef TRAINOPS_ERRORS_HPP_
#define TRAINOPS_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace trainops {

// Base class for all library errors. CLI maps ConfigError to exit code 2,
// everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed data fed to an operation (NaN loss, bad score range, ...).
class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error(what) {}
};

// Bad configuration: violated invariants on config structs, weight sums,
// all-zero resampling weights, unknown enum strings.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// A mandatory sample set that cannot be scheduled. Carries how many
// mandatory samples did not fit.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t overflow)
      : Error(what), overflow_count(overflow) {}
  std::size_t overflow_count;
};

// Zero-denominator precision/recall. Carries the metric name.
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& metric_name)
      : Error(metric_name + " is undefined on this input"), metric(metric_name) {}
  UndefinedMetricError(const std::string& what, std::string metric_name)
      : Error(what), metric(std::move(metric_name)) {}
  std::string metric;
};

// Snapshot restore failed; the scheduler cannot continue.
class SnapshotError : public Error {
 public:
  explicit SnapshotError(const std::string& what) : Error(what) {}
};

}  // namespace trainops

#endif  // TRAINOPS_ERRORS_HPP_
