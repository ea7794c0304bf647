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

#include "wsnad/metrics.hpp"

#include <string>

#include "wsnad/common.hpp"

namespace wsnad {

double f1_from(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

MetricsReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricsReport r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.tn = tn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = f1_from(r.precision, r.recall);
  return r;
}

MetricsReport evaluate(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size())
    fail(ErrorKind::shape, "alignment: " + std::to_string(predicted.size()) + " predictions for " +
                               std::to_string(truth.size()) + " labels");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if ((p != 0 && p != 1) || (t != 0 && t != 1))
      fail(ErrorKind::data, "label at position " + std::to_string(i) + " is not 0 or 1");
    if (p == 1 && t == 1) ++tp;
    else if (p == 1) ++fp;
    else if (t == 1) ++fn;
    else ++tn;
  }
  return report_from_counts(tp, fp, fn, tn);
}

}  // namespace wsnad
