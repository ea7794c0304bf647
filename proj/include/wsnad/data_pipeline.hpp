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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wsnad/common.hpp"

// Raw sensor records to aligned, windowed, normalised graph samples.

namespace wsnad {

struct RawRecord {
  double timestamp = 0.0;
  std::size_t node = 0;
  std::vector<double> values;  // one per modality; NaN marks a missing cell
};

struct AlignedSeries {
  double interval = 0.0;
  std::vector<double> grid;
  std::size_t nodes = 0;
  std::size_t modalities = 0;
  std::vector<double> data;          // node, modality, step
  std::vector<std::uint8_t> filled;  // 1 where the cell was interpolated

  std::size_t steps() const { return grid.size(); }
  std::size_t index(std::size_t n, std::size_t m, std::size_t t) const { return (n * modalities + m) * grid.size() + t; }
  double at(std::size_t n, std::size_t m, std::size_t t) const { return data[index(n, m, t)]; }
};

struct SampleWindow {
  std::size_t nodes = 0;
  std::size_t modalities = 0;
  std::size_t window = 0;
  std::vector<double> x;  // node, modality, step
  double origin_time = 0.0;
  std::size_t phase = 0;
  std::size_t grid_start = 0;  // grid index of the segment start
  std::size_t stride = 1;      // k: grid steps between consecutive window steps

  double& at(std::size_t n, std::size_t m, std::size_t t) { return x[(n * modalities + m) * window + t]; }
  double at(std::size_t n, std::size_t m, std::size_t t) const { return x[(n * modalities + m) * window + t]; }
  /// Grid index of window step t.
  std::size_t grid_index(std::size_t t) const { return grid_start + phase + t * stride; }
};

inline constexpr int kUnlabeled = -1;

struct AttributedGraphSample {
  std::size_t id = 0;
  Mat adjacency;
  SampleWindow window;
  std::vector<int> labels;  // per node: kUnlabeled, 0 normal, 1 anomalous
  std::vector<int> truth;   // per node: 1 where an anomaly was injected
};

struct DatasetSplit {
  std::vector<AttributedGraphSample> train, validation, test;
};

/// Records are grouped by (node, modality). Grid point g_i = t_start + i·interval
/// for every g_i ≤ t_end; interval i covers [g_i, g_i + interval).
AlignedSeries align_timestamps(const std::vector<RawRecord>& records, std::size_t nodes, std::size_t modalities,
                               double interval, double t_start, double t_end);

/// Splits grid segment [start, start + k·W) into k phase-interleaved windows.
std::vector<SampleWindow> downsample_windows(const AlignedSeries& series, std::size_t k, std::size_t window,
                                             std::size_t start);

/// Per (node, modality) z-score with population σ floored at sigma_floor.
SampleWindow zscore_normalize(const SampleWindow& w, double sigma_floor = 1e-8);

struct SplitCounts {
  std::size_t train = 0, validation = 0, test = 0;
};

/// Chronological floor-then-distribute partition sizes.
SplitCounts split_counts(std::size_t n, double train, double validation, double test);

DatasetSplit split_dataset(std::vector<AttributedGraphSample> samples, double train = 0.7, double validation = 0.2,
                           double test = 0.1);

struct AdjacencyRule {
  enum class Kind { radius, knn } kind = Kind::radius;
  double radius = 1.0;
  std::size_t neighbors = 1;
};

/// positions: N × 2. Isolated nodes under the radius rule are logged and,
/// when warnings is non-null, reported there.
Mat build_adjacency(const Mat& positions, const AdjacencyRule& rule, std::vector<std::string>* warnings = nullptr);

}  // namespace wsnad
