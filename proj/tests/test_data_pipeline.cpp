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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <unistd.h>

#include "support/oracles.hpp"
#include "wsnad/anomaly_injection.hpp"
#include "wsnad/data_pipeline.hpp"
#include "wsnad/dataset_io.hpp"
#include "wsnad/pretrain.hpp"
#include "wsnad/synthetic.hpp"

using namespace wsnad;
namespace fs = std::filesystem;

namespace {

constexpr double t0 = 1000.0;

AlignedSeries ramp_series(std::size_t steps) {
  AlignedSeries s;
  s.interval = 1.0;
  s.nodes = 1;
  s.modalities = 1;
  for (std::size_t i = 0; i < steps; ++i) {
    s.grid.push_back(static_cast<double>(i));
    s.data.push_back(static_cast<double>(i));
    s.filled.push_back(0);
  }
  return s;
}

SampleWindow window_of(const std::vector<double>& v) {
  SampleWindow w;
  w.nodes = 1;
  w.modalities = 1;
  w.window = v.size();
  w.x = v;
  return w;
}

std::vector<AttributedGraphSample> blank_samples(std::size_t count, std::size_t nodes, std::size_t modalities,
                                                 std::size_t window, Rng& rng) {
  std::vector<AttributedGraphSample> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].id = i;
    out[i].adjacency = Mat::identity(nodes);
    out[i].window.nodes = nodes;
    out[i].window.modalities = modalities;
    out[i].window.window = window;
    out[i].window.x.resize(nodes * modalities * window);
    for (double& v : out[i].window.x) v = rng.normal();
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wsnad_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("alignment picks the record nearest the interval start") {
  const std::vector<RawRecord> recs = {{t0 + 1, 0, {1.0}}, {t0 + 2, 0, {3.0}}};
  const AlignedSeries s = align_timestamps(recs, 1, 1, 10.0, t0, t0);
  REQUIRE(s.steps() == 1);
  CHECK(s.at(0, 0, 0) == 1.0);
  CHECK(s.filled[0] == 0);

  const std::vector<RawRecord> exact = {{t0, 0, {5.5}}};
  const AlignedSeries e = align_timestamps(exact, 1, 1, 10.0, t0, t0);
  CHECK(e.at(0, 0, 0) == 5.5);
  CHECK(e.filled[0] == 0);

  // two records equally close to the interval start are averaged
  const std::vector<RawRecord> tie = {{t0 + 2, 0, {1.0}}, {t0 + 2, 0, {3.0}}, {t0 + 5, 0, {9.0}}};
  CHECK(align_timestamps(tie, 1, 1, 10.0, t0, t0).at(0, 0, 0) == 2.0);
}

TEST_CASE("alignment interpolates empty intervals") {
  const std::vector<RawRecord> recs = {{t0 - 2, 0, {2.0}}, {t0 + 3, 0, {7.0}}};
  const AlignedSeries s = align_timestamps(recs, 1, 1, 1.0, t0 - 2, t0 + 3);
  REQUIRE(s.steps() == 6);
  CHECK(s.at(0, 0, 2) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(s.filled[s.index(0, 0, 2)] == 1);
  CHECK(s.filled[s.index(0, 0, 0)] == 0);
  CHECK(s.filled[s.index(0, 0, 5)] == 0);
  for (std::size_t i = 1; i < s.steps(); ++i) CHECK(s.grid[i] - s.grid[i - 1] == 1.0);
}

TEST_CASE("alignment errors") {
  // node 1 has nothing at all
  const std::vector<RawRecord> recs = {{t0, 0, {1.0}}, {t0 + 5, 0, {2.0}}};
  try {
    align_timestamps(recs, 2, 1, 1.0, t0, t0 + 5);
    FAIL("expected a gap error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("node 1") != std::string::npos);
  }
  // the last grid point has no record after it
  const std::vector<RawRecord> early = {{t0, 0, {1.0}}, {t0 + 2, 0, {2.0}}};
  CHECK_THROWS_AS(align_timestamps(early, 1, 1, 1.0, t0, t0 + 5), Error);
  CHECK_THROWS_AS(align_timestamps(recs, 1, 1, 0.0, t0, t0 + 5), Error);
}

TEST_CASE("phase-interleaved decimation") {
  const AlignedSeries s = ramp_series(6);
  const auto w = downsample_windows(s, 2, 3, 0);
  REQUIRE(w.size() == 2);
  CHECK(w[0].x == std::vector<double>{0, 2, 4});
  CHECK(w[1].x == std::vector<double>{1, 3, 5});
  CHECK(w[1].phase == 1);

  const auto one = downsample_windows(s, 1, 6, 0);
  REQUIRE(one.size() == 1);
  CHECK(one[0].x == std::vector<double>{0, 1, 2, 3, 4, 5});

  try {
    downsample_windows(ramp_series(5), 2, 3, 0);
    FAIL("expected a length error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("6") != std::string::npos);
  }
}

TEST_CASE("decimation partitions the segment for random k and W") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(6), W = 1 + rng.below(12), start = rng.below(5);
    const AlignedSeries s = ramp_series(start + k * W + rng.below(3));
    const auto ws = downsample_windows(s, k, W, start);
    REQUIRE(ws.size() == k);
    std::vector<int> seen(k * W, 0);
    for (const auto& w : ws)
      for (std::size_t t = 0; t < W; ++t) {
        const auto idx = static_cast<std::size_t>(w.x[t]);
        CHECK(idx == w.grid_index(t));
        REQUIRE(idx >= start);
        REQUIRE(idx < start + k * W);
        ++seen[idx - start];
      }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST_CASE("z-score normalisation") {
  const auto a = zscore_normalize(window_of({1, 2, 3}));
  CHECK(a.x[0] == doctest::Approx(-1.2247448714).epsilon(1e-9));
  CHECK(a.x[1] == doctest::Approx(0.0));
  CHECK(a.x[2] == doctest::Approx(1.2247448714).epsilon(1e-9));
  CHECK(zscore_normalize(window_of({5, 5, 5})).x == std::vector<double>{0, 0, 0});

  const std::vector<double> std_seq = {-1.0, 1.0, -1.0, 1.0};
  const auto fixed = zscore_normalize(window_of(std_seq));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(fixed.x[i] - std_seq[i]) < 1e-12);
  CHECK_THROWS_AS(zscore_normalize(window_of({1.0})), Error);

  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    SampleWindow w;
    w.nodes = 1 + rng.below(4);
    w.modalities = 1 + rng.below(3);
    w.window = 2 + rng.below(40);
    w.x.resize(w.nodes * w.modalities * w.window);
    const double shift = rng.uniform(-1e3, 1e3), scale = std::exp(rng.uniform(-5, 5));
    for (double& v : w.x) v = shift + scale * rng.normal();
    const auto z = zscore_normalize(w);
    for (std::size_t n = 0; n < w.nodes; ++n)
      for (std::size_t m = 0; m < w.modalities; ++m) {
        double mu = 0, var = 0;
        for (std::size_t t = 0; t < w.window; ++t) mu += z.at(n, m, t);
        mu /= static_cast<double>(w.window);
        for (std::size_t t = 0; t < w.window; ++t) var += (z.at(n, m, t) - mu) * (z.at(n, m, t) - mu);
        CHECK(std::abs(mu) <= 1e-6);
        CHECK(std::abs(std::sqrt(var / static_cast<double>(w.window)) - 1.0) <= 1e-6);
      }
  }
}

TEST_CASE("chronological split sizes") {
  const auto c100 = split_counts(100, 0.7, 0.2, 0.1);
  CHECK(c100.train == 70);
  CHECK(c100.validation == 20);
  CHECK(c100.test == 10);
  const auto c10 = split_counts(10, 0.7, 0.2, 0.1);
  CHECK(c10.train == 7);
  CHECK(c10.validation == 2);
  CHECK(c10.test == 1);
  CHECK_THROWS_AS(split_counts(10, 0.5, 0.5, 0.5), Error);

  Rng rng(3);
  auto samples = blank_samples(100, 2, 1, 4, rng);
  const auto split = split_dataset(std::move(samples));
  CHECK(split.train.size() == 70);
  CHECK(split.validation.size() == 20);
  CHECK(split.test.size() == 10);
  CHECK(split.train.back().id < split.validation.front().id);
  CHECK(split.validation.back().id < split.test.front().id);

  for (std::size_t n = 0; n < 300; ++n) {
    const auto c = split_counts(n, 0.7, 0.2, 0.1);
    CHECK(c.train + c.validation + c.test == n);
    CHECK(std::abs(static_cast<double>(c.train) - 0.7 * static_cast<double>(n)) <= 1.0);
    CHECK(std::abs(static_cast<double>(c.validation) - 0.2 * static_cast<double>(n)) <= 1.0);
    CHECK(std::abs(static_cast<double>(c.test) - 0.1 * static_cast<double>(n)) <= 1.0);
  }
}

TEST_CASE("adjacency rules") {
  const Mat two{{0, 0}, {1, 0}};
  AdjacencyRule r;
  r.radius = 2.0;
  const Mat a = build_adjacency(two, r);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == 1.0);
  CHECK(a(0, 0) == 1.0);

  const Mat line{{0, 0}, {1, 0}, {3, 0}};
  AdjacencyRule knn;
  knn.kind = AdjacencyRule::Kind::knn;
  knn.neighbors = 1;
  const Mat k = build_adjacency(line, knn);
  const Mat want{{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
  CHECK(max_abs_diff(k, want) == 0.0);

  AdjacencyRule tight;
  tight.radius = 0.5;
  std::vector<std::string> warnings;
  const Mat iso = build_adjacency(line, tight, &warnings);
  CHECK(max_abs_diff(iso, Mat::identity(3)) == 0.0);
  CHECK(warnings.size() == 3);

  // brute-force symmetry and diagonal on random layouts
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    Mat pos(n, 2);
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = rng.uniform();
    knn.neighbors = 1 + rng.below(n - 1);
    const Mat adj = build_adjacency(pos, knn);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(adj(i, i) == 1.0);
      std::size_t deg = 0;
      for (std::size_t j = 0; j < n; ++j) {
        CHECK(adj(i, j) == adj(j, i));
        deg += (i != j && adj(i, j) != 0.0);
      }
      CHECK(deg >= knn.neighbors);
    }
  }
}

TEST_CASE("injection budget and labels") {
  Rng rng(5);
  DatasetSplit split;
  split.train = blank_samples(125, 8, 3, 32, rng);
  for (std::size_t i = 0; i < 125; ++i) split.train[i].id = i;
  AnomalySpec spec;
  const auto log = inject_anomalies(split, spec);
  CHECK(log.size() == 20);
  std::size_t truth = 0, lab_anom = 0, lab_norm = 0;
  for (const auto& s : split.train)
    for (std::size_t n = 0; n < 8; ++n) {
      truth += static_cast<std::size_t>(s.truth[n]);
      if (s.labels[n] == 1) {
        ++lab_anom;
        CHECK(s.truth[n] == 1);
      }
      if (s.labels[n] == 0) {
        ++lab_norm;
        CHECK(s.truth[n] == 0);
      }
    }
  CHECK(truth == 20);
  CHECK(lab_anom + lab_norm == 30);
  CHECK(lab_norm == 2 * lab_anom);

  // deterministic under the seed
  DatasetSplit again;
  Rng rng2(5);
  again.train = blank_samples(125, 8, 3, 32, rng2);
  for (std::size_t i = 0; i < 125; ++i) again.train[i].id = i;
  const auto log2 = inject_anomalies(again, spec);
  REQUIRE(log2.size() == log.size());
  for (std::size_t i = 0; i < log.size(); ++i) CHECK(to_json_line(log[i]) == to_json_line(log2[i]));

  AnomalySpec bad = spec;
  bad.type_mix = {0.5, 0.5, 0.5, 0, 0};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = spec;
  bad.injection_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("point anomaly stands out under a 3-sigma rule") {
  Rng rng(6);
  AnomalySpec spec;
  spec.magnitude = 6.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SampleWindow w = window_of(std::vector<double>(32));
    for (double& v : w.x) v = rng.normal();
    const auto rec = inject_one(w, 0, AnomalyType::point, spec, seed);
    double mu = 0, var = 0;
    for (double v : w.x) mu += v;
    mu /= 32;
    for (double v : w.x) var += (v - mu) * (v - mu);
    const double sd = std::sqrt(var / 32);
    CHECK(std::abs(w.x[rec.start] - mu) / sd >= 3.0);
    CHECK(rec.length == 1);
  }
}

TEST_CASE("intra-node correlation anomaly flips the sign of the coupling") {
  Rng rng(7);
  AnomalySpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SampleWindow w;
    w.nodes = 1;
    w.modalities = 2;
    w.window = 32;
    w.x.resize(64);
    // modality 1 ≈ −0.9 correlated with modality 0
    for (std::size_t t = 0; t < 32; ++t) {
      const double a = rng.normal();
      w.at(0, 0, t) = a;
      w.at(0, 1, t) = -0.9 * a + std::sqrt(1 - 0.81) * rng.normal();
    }
    const auto rec = inject_one(w, 0, AnomalyType::intra_corr, spec, seed);
    std::vector<double> a, b;
    for (std::size_t t = rec.start; t < rec.start + rec.length; ++t) {
      a.push_back(w.at(0, 0, t));
      b.push_back(w.at(0, 1, t));
    }
    CHECK(pearson(a, b) >= 0.0);
  }
}

TEST_CASE("other anomaly types stay inside their segment") {
  Rng rng(8);
  AnomalySpec spec;
  for (auto type : {AnomalyType::collective, AnomalyType::contextual, AnomalyType::inter_corr}) {
    SampleWindow w = window_of(std::vector<double>(32));
    for (double& v : w.x) v = rng.normal();
    const auto before = w.x;
    const auto rec = inject_one(w, 0, type, spec, 3);
    CHECK(rec.start + rec.length <= 32);
    for (std::size_t t = 0; t < 32; ++t)
      if (t < rec.start || t >= rec.start + rec.length) CHECK(w.x[t] == before[t]);
    CHECK(w.x != before);
    const auto back = injection_from_json_line(to_json_line(rec));
    CHECK(to_json_line(back) == to_json_line(rec));
  }
  CHECK_THROWS_AS(anomaly_type_from_string("spike"), Error);
}

TEST_CASE("records and dataset round trip through disk") {
  const fs::path dir = scratch("io");
  SyntheticConfig sc;
  sc.nodes = 4;
  sc.steps = 600;
  const auto syn = generate_synthetic(sc);
  write_records_csv((dir / "r.csv").string(), syn.records, syn.modality_names);
  write_positions_csv((dir / "p.csv").string(), syn.positions);
  std::vector<std::string> names;
  const auto recs = read_records_csv((dir / "r.csv").string(), &names);
  CHECK(names == syn.modality_names);
  REQUIRE(recs.size() == syn.records.size());
  CHECK(max_abs_diff(read_positions_csv((dir / "p.csv").string()), syn.positions) == 0.0);

  PreprocessOptions opt;
  opt.window = 8;
  Dataset ds = preprocess_records(recs, names, syn.positions, opt);
  CHECK(ds.sample_count() > 0);
  ds.injections = inject_anomalies(ds.split, AnomalySpec{});
  ds.injected = true;
  const std::string h1 = save_dataset((dir / "a").string(), ds);
  const std::string h2 = save_dataset((dir / "b").string(), ds);
  CHECK(h1 == h2);
  std::string mh;
  const Dataset back = load_dataset((dir / "a").string(), &mh);
  CHECK(mh == h1);
  CHECK(back.sample_count() == ds.sample_count());
  CHECK(back.injections.size() == ds.injections.size());
  CHECK(back.split.test.back().window.x == ds.split.test.back().window.x);
  CHECK(back.split.train.front().labels == ds.split.train.front().labels);

  // corrupt the data file
  {
    std::fstream f((dir / "a" / "windows.bin").string(), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(16);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_dataset((dir / "a").string()), Error);
  fs::remove_all(dir);
}
