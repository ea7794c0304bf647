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

#include <cstdint>
#include <string>
#include <vector>

#include "wsnad/data_pipeline.hpp"

// Seeded generator of sensor-network-like raw readings: a shared daily cycle
// seen by every node with a per-node lag, a humidity channel anti-correlated
// with temperature, and a slowly draining supply voltage. Timestamps are
// jittered and a small share of cells is left empty so the alignment stage
// has work to do.

namespace wsnad {

struct SyntheticConfig {
  std::size_t nodes = 8;
  std::size_t modalities = 3;
  std::size_t steps = 4096;
  double interval = 30.0;
  double t_start = 1.0e9;
  double period = 288.0;  // steps per cycle
  double noise = 0.05;
  double jitter = 0.2;  // timestamp jitter as a fraction of the interval
  double missing_rate = 0.002;
  double radius = 0.45;  // adjacency radius in the unit square
  std::uint64_t seed = 1;
};

struct SyntheticData {
  Mat positions;  // N × 2
  std::vector<RawRecord> records;
  std::vector<std::string> modality_names;
  double t_start = 0.0;
  double t_end = 0.0;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

}  // namespace wsnad
