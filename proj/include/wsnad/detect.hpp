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

#include <iosfwd>
#include <string>
#include <vector>

#include "wsnad/trainer.hpp"

// Sliding-window detection on the recurrent path, and the per-step plot
// table joining a dataset, its injection log and a detection file.

namespace wsnad {

struct StreamDetectOptions {
  std::size_t window = 300;  // steps streamed into a fresh state per detection
  std::size_t stride = 1;    // score every stride-th sample of each phase stream
  std::size_t threads = 1;
};

struct StreamDetection {
  std::size_t sample_id = 0;
  std::size_t node = 0;
  double score = 0.0;
  int label = 0;
  double threshold = 0.5;
  std::size_t steps = 0;  // steps streamed before the readout
};

/// Samples of one phase, in time order, form a stream; a detection for a
/// sample streams the last `window` steps ending at the sample's final step
/// (fewer when the stream starts later or has a gap) and scores every node.
std::vector<StreamDetection> detect_stream(const DetectorModel& model, const Dataset& ds,
                                           const StreamDetectOptions& opt);

std::string to_json_line(const StreamDetection& d);
StreamDetection stream_detection_from_json_line(const std::string& line);

/// CSV: sample_id, step, time, one column per modality, truth_label,
/// predicted_label. truth_label marks the steps covered by an injection;
/// predicted_label repeats the node's detected label over its sample.
void write_plot_csv(std::ostream& out, const Dataset& ds, std::size_t node,
                    const std::vector<StreamDetection>& detections);

}  // namespace wsnad
