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
#include <vector>

// Binary detection metrics with anomalies (label 1) as the positive class.

namespace wsnad {

struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Zero denominators give 0. Labels must be 0 or 1.
MetricsReport evaluate(const std::vector<int>& predicted, const std::vector<int>& truth);
/// Precision, recall and F1 from confusion counts.
MetricsReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
double f1_from(double precision, double recall);

}  // namespace wsnad
