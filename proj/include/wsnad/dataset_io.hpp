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

#include <string>
#include <vector>

#include "wsnad/anomaly_injection.hpp"
#include "wsnad/data_pipeline.hpp"

// On-disk dataset directory:
//   manifest.json     shapes, adjacency, per-sample split/time/labels, data hash
//   windows.bin       every sample's window values, little-endian f64, id order
//   injections.jsonl  injection log (present after injection)

namespace wsnad {

struct Dataset {
  std::size_t nodes = 0;
  std::size_t modalities = 0;
  std::size_t window = 0;
  std::size_t k = 1;
  double interval = 0.0;
  std::vector<std::string> modality_names;
  Mat adjacency;
  DatasetSplit split;
  std::vector<InjectionRecord> injections;
  bool injected = false;

  std::size_t sample_count() const { return split.train.size() + split.validation.size() + split.test.size(); }
  /// Sample by id, searching all partitions.
  const AttributedGraphSample* find(std::size_t id) const;
};

/// Writes the directory and returns the manifest hash.
std::string save_dataset(const std::string& dir, const Dataset& ds);
/// Loads and verifies the data hash; manifest_hash receives the hash of manifest.json.
Dataset load_dataset(const std::string& dir, std::string* manifest_hash = nullptr);
std::string manifest_hash_of(const std::string& dir);

/// CSV with header `timestamp,node_id,<modality...>`; empty cells are missing.
std::vector<RawRecord> read_records_csv(const std::string& path, std::vector<std::string>* modality_names);
void write_records_csv(const std::string& path, const std::vector<RawRecord>& records,
                       const std::vector<std::string>& modality_names);

/// CSV with header `node_id,x,y`.
Mat read_positions_csv(const std::string& path);
void write_positions_csv(const std::string& path, const Mat& positions);

struct PreprocessOptions {
  double interval = 30.0;
  std::size_t k = 2;
  std::size_t window = 32;
  double ratios[3] = {0.7, 0.2, 0.1};
  AdjacencyRule adjacency;
};

/// Align, cut into non-overlapping kW segments, decimate, normalise, split.
Dataset preprocess_records(const std::vector<RawRecord>& records, const std::vector<std::string>& modality_names,
                           const Mat& positions, const PreprocessOptions& opt);

}  // namespace wsnad
