// Copyright 2026 The wsnad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wsnad/data_pipeline.hpp"

// Synthetic anomalies written into normalised windows, plus the sparse
// labelling that the few-shot stage trains on.

namespace wsnad {

enum class AnomalyType { point, collective, contextual, intra_corr, inter_corr };
inline constexpr std::size_t kAnomalyTypes = 5;

const char* to_string(AnomalyType t);
AnomalyType anomaly_type_from_string(const std::string& s);

struct AnomalySpec {
  double injection_rate = 0.02;
  double labeled_fraction = 0.03;
  double normal_per_anomalous = 2.0;
  std::array<double, kAnomalyTypes> type_mix = {0.2, 0.2, 0.2, 0.2, 0.2};
  double magnitude = 4.0;        // point spike, in window σ
  double shift_magnitude = 2.0;  // collective level shift, in window σ
  std::uint64_t seed = 1;

  void validate() const;
};

struct InjectionRecord {
  std::size_t window_index = 0;  // sample id
  std::size_t node = 0;
  std::size_t modality = 0;
  AnomalyType type = AnomalyType::point;
  std::size_t start = 0;
  std::size_t length = 0;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
};

/// Alters one node's window in place and returns the log entry.
InjectionRecord inject_one(SampleWindow& w, std::size_t node, AnomalyType type, const AnomalySpec& spec,
                           std::uint64_t seed);

/// Injects over every (window, node) slot of the split in train, validation,
/// test order, sets truth vectors and sparse labels. Returns the log.
std::vector<InjectionRecord> inject_anomalies(DatasetSplit& split, const AnomalySpec& spec);

std::string to_json_line(const InjectionRecord& r);
InjectionRecord injection_from_json_line(const std::string& line);

}  // namespace wsnad
