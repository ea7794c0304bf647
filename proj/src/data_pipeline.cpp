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

#include "wsnad/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace wsnad {

AlignedSeries align_timestamps(const std::vector<RawRecord>& records, std::size_t nodes, std::size_t modalities,
                               double interval, double t_start, double t_end) {
  if (!(interval > 0.0) || !std::isfinite(interval)) fail(ErrorKind::config, "alignment interval must be positive");
  if (!(t_end >= t_start)) fail(ErrorKind::config, "alignment span end precedes start");
  AlignedSeries s;
  s.interval = interval;
  s.nodes = nodes;
  s.modalities = modalities;
  const auto steps = static_cast<std::size_t>(std::floor((t_end - t_start) / interval + 1e-9)) + 1;
  s.grid.resize(steps);
  for (std::size_t i = 0; i < steps; ++i) s.grid[i] = t_start + static_cast<double>(i) * interval;
  s.data.assign(nodes * modalities * steps, 0.0);
  s.filled.assign(nodes * modalities * steps, 0);

  // (timestamp, value) per cell stream, sorted by time.
  std::vector<std::vector<std::pair<double, double>>> streams(nodes * modalities);
  for (const RawRecord& r : records) {
    if (!std::isfinite(r.timestamp)) fail(ErrorKind::data, "record with non-finite timestamp");
    if (r.node >= nodes) fail(ErrorKind::data, "record node " + std::to_string(r.node) + " out of range");
    if (r.values.size() != modalities)
      fail(ErrorKind::data, "record has " + std::to_string(r.values.size()) + " values, expected " +
                                std::to_string(modalities));
    for (std::size_t m = 0; m < modalities; ++m)
      if (std::isfinite(r.values[m])) streams[r.node * modalities + m].emplace_back(r.timestamp, r.values[m]);
  }

  for (std::size_t n = 0; n < nodes; ++n) {
    for (std::size_t m = 0; m < modalities; ++m) {
      auto& st = streams[n * modalities + m];
      if (st.empty())
        fail(ErrorKind::data, "unrecoverable gap: node " + std::to_string(n) + " modality " + std::to_string(m) +
                                  " has no records");
      std::stable_sort(st.begin(), st.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t i = 0; i < steps; ++i) {
        const double g = s.grid[i];
        auto lo = std::lower_bound(st.begin(), st.end(), g, [](const auto& p, double t) { return p.first < t; });
        const std::size_t cell = s.index(n, m, i);
        if (lo != st.end() && lo->first < g + interval) {
          // Closest to the interval start is the earliest record in it.
          double sum = 0.0;
          std::size_t cnt = 0;
          for (auto it = lo; it != st.end() && it->first == lo->first; ++it) {
            sum += it->second;
            ++cnt;
          }
          s.data[cell] = sum / static_cast<double>(cnt);
          continue;
        }
        if (lo == st.begin() || lo == st.end())
          fail(ErrorKind::data, "boundary extrapolation: node " + std::to_string(n) + " modality " +
                                    std::to_string(m) + " has no record on both sides of t=" + std::to_string(g));
        const auto& after = *lo;
        const auto& before = *(lo - 1);
        const double w = (g - before.first) / (after.first - before.first);
        s.data[cell] = before.second + (after.second - before.second) * w;
        s.filled[cell] = 1;
      }
    }
  }
  return s;
}

std::vector<SampleWindow> downsample_windows(const AlignedSeries& series, std::size_t k, std::size_t window,
                                             std::size_t start) {
  if (k == 0 || window == 0) fail(ErrorKind::config, "downsampling needs k >= 1 and W >= 1");
  const std::size_t need = k * window;
  if (start + need > series.steps())
    fail(ErrorKind::data, "segment too short: need kW = " + std::to_string(need) + " steps from index " +
                              std::to_string(start) + ", series has " + std::to_string(series.steps()));
  std::vector<SampleWindow> out(k);
  for (std::size_t p = 0; p < k; ++p) {
    SampleWindow& w = out[p];
    w.nodes = series.nodes;
    w.modalities = series.modalities;
    w.window = window;
    w.phase = p;
    w.stride = k;
    w.grid_start = start;
    w.origin_time = series.grid[start];
    w.x.resize(series.nodes * series.modalities * window);
    for (std::size_t n = 0; n < series.nodes; ++n)
      for (std::size_t m = 0; m < series.modalities; ++m)
        for (std::size_t t = 0; t < window; ++t) w.at(n, m, t) = series.at(n, m, start + p + t * k);
  }
  return out;
}

SampleWindow zscore_normalize(const SampleWindow& w, double sigma_floor) {
  if (w.window < 2) fail(ErrorKind::config, "z-score needs W >= 2");
  SampleWindow out = w;
  for (std::size_t n = 0; n < w.nodes; ++n) {
    for (std::size_t m = 0; m < w.modalities; ++m) {
      double mu = 0.0;
      for (std::size_t t = 0; t < w.window; ++t) {
        const double v = w.at(n, m, t);
        if (!std::isfinite(v))
          fail(ErrorKind::data, "non-finite value at node " + std::to_string(n) + " modality " + std::to_string(m) +
                                    " step " + std::to_string(t));
        mu += v;
      }
      mu /= static_cast<double>(w.window);
      double var = 0.0;
      for (std::size_t t = 0; t < w.window; ++t) var += (w.at(n, m, t) - mu) * (w.at(n, m, t) - mu);
      var /= static_cast<double>(w.window);
      const double sd = std::max(std::sqrt(var), sigma_floor);
      for (std::size_t t = 0; t < w.window; ++t) out.at(n, m, t) = (w.at(n, m, t) - mu) / sd;
    }
  }
  return out;
}

SplitCounts split_counts(std::size_t n, double train, double validation, double test) {
  const double r[3] = {train, validation, test};
  for (double v : r)
    if (!(v > 0.0)) fail(ErrorKind::config, "split ratios must be positive");
  if (std::abs(train + validation + test - 1.0) > 1e-9)
    fail(ErrorKind::config, "split ratios sum to " + std::to_string(train + validation + test) + ", expected 1");
  std::size_t c[3];
  double frac[3];
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = r[i] * static_cast<double>(n);
    c[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    frac[i] = exact - static_cast<double>(c[i]);
    used += c[i];
  }
  int order[3] = {0, 1, 2};
  std::stable_sort(order, order + 3, [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++c[order[i % 3]];
  return {c[0], c[1], c[2]};
}

DatasetSplit split_dataset(std::vector<AttributedGraphSample> samples, double train, double validation,
                           double test) {
  const SplitCounts c = split_counts(samples.size(), train, validation, test);
  DatasetSplit s;
  auto b = std::make_move_iterator(samples.begin());
  s.train.assign(b, b + static_cast<long>(c.train));
  s.validation.assign(b + static_cast<long>(c.train), b + static_cast<long>(c.train + c.validation));
  s.test.assign(b + static_cast<long>(c.train + c.validation), std::make_move_iterator(samples.end()));
  return s;
}

Mat build_adjacency(const Mat& positions, const AdjacencyRule& rule, std::vector<std::string>* warnings) {
  if (positions.cols() != 2) fail(ErrorKind::shape, "positions must be N x 2, got " + positions.shape_str());
  if (!all_finite(positions)) fail(ErrorKind::data, "non-finite node position");
  const std::size_t n = positions.rows();
  auto dist = [&](std::size_t i, std::size_t j) {
    return std::hypot(positions(i, 0) - positions(j, 0), positions(i, 1) - positions(j, 1));
  };
  Mat a = Mat::identity(n);
  if (rule.kind == AdjacencyRule::Kind::radius) {
    if (!(rule.radius > 0.0)) fail(ErrorKind::config, "adjacency radius must be positive");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && dist(i, j) <= rule.radius) a(i, j) = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      bool isolated = true;
      for (std::size_t j = 0; j < n; ++j) isolated = isolated && (i == j || a(i, j) == 0.0);
      if (isolated && n > 1) {
        const std::string msg = "node " + std::to_string(i) + " has no neighbour within radius " +
                                std::to_string(rule.radius);
        spdlog::warn("{}", msg);
        if (warnings != nullptr) warnings->push_back(msg);
      }
    }
  } else {
    if (rule.neighbors == 0) fail(ErrorKind::config, "knn adjacency needs at least one neighbour");
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::size_t> order;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) order.push_back(j);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return dist(i, x) < dist(i, y); });
      for (std::size_t r = 0; r < std::min(rule.neighbors, order.size()); ++r) {
        a(i, order[r]) = 1.0;
        a(order[r], i) = 1.0;
      }
    }
  }
  return a;
}

}  // namespace wsnad
