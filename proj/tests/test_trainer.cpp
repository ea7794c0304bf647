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

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "wsnad/detect.hpp"
#include "wsnad/synthetic.hpp"
#include "wsnad/trainer.hpp"

using namespace wsnad;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.backbone.layers = 1;
  cfg.backbone.heads = 1;
  cfg.backbone.d_model = 6;
  cfg.backbone.msr_qk_dim = 2;
  cfg.backbone.cr_qk_dim = 2;
  cfg.backbone.window = 8;
  cfg.backbone.gat_out = 4;
  cfg.preprocess.window = 8;
  cfg.preprocess.adjacency.radius = 0.45;
  cfg.discriminator.k = 2;
  cfg.discriminator.layers = 2;
  cfg.discriminator.query_max = 32;
  cfg.pretrain.k_neg = 2;
  cfg.anomaly.injection_rate = 0.05;
  cfg.anomaly.labeled_fraction = 0.1;
  cfg.train.stage1_epochs = 3;
  cfg.train.stage2_epochs = 4;
  cfg.train.freeze_backbone_after = 2;
  cfg.train.batch_size = 8;
  cfg.train.stage2_batch_size = 32;
  cfg.train.learning_rate = 1e-3;
  cfg.train.threads = 2;
  return cfg;
}

const Dataset& tiny_dataset() {
  static const Dataset ds = [] {
    const RunConfig cfg = tiny_config();
    SyntheticConfig sc;
    sc.steps = 1700;
    sc.seed = 5;
    const auto syn = generate_synthetic(sc);
    Dataset d = preprocess_records(syn.records, syn.modality_names, syn.positions, cfg.preprocess);
    d.injections = inject_anomalies(d.split, cfg.anomaly);
    d.injected = true;
    return d;
  }();
  return ds;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wsnad_trainer_test_" + std::to_string(::getpid())) / name;
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> lines_of(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

struct Stage1Fixture {
  Stage1Result res;
  std::string metrics;
};

const Stage1Fixture& stage1() {
  static const Stage1Fixture f = [] {
    Stage1Fixture out;
    std::ostringstream m;
    out.res = run_stage1(tiny_config(), tiny_dataset(), "h", scratch("s1a").string(), &m);
    out.metrics = m.str();
    return out;
  }();
  return f;
}

}  // namespace

TEST_CASE("tiny dataset shape") {
  const Dataset& ds = tiny_dataset();
  // 1700 steps hold 106 segments of k·W = 16 steps, two windows each
  CHECK(ds.sample_count() == 212);
  CHECK(ds.split.train.size() == 148);
  CHECK(ds.nodes == 8);
}

TEST_CASE("stage 1 is deterministic and keeps the best checkpoint") {
  const auto& a = stage1();
  std::ostringstream m;
  const auto b = run_stage1(tiny_config(), tiny_dataset(), "h", scratch("s1b").string(), &m);
  CHECK(m.str() == a.metrics);
  CHECK(slurp(b.best_path) == slurp(a.res.best_path));
  CHECK(slurp(b.last_path) == slurp(a.res.last_path));

  const auto lines = lines_of(a.metrics);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0]["lr"].get<double>() == 1e-3);
  CHECK(lines[0]["batch_size"].get<std::size_t>() == 8);
  for (std::size_t e = 1; e < lines.size(); ++e) {
    CHECK(lines[e]["epoch"].get<std::size_t>() == e - 1);
    CHECK(std::isfinite(lines[e]["val_loss"].get<double>()));
  }
  CHECK(a.res.epochs_run == 3);
  CHECK(a.res.best_val_loss <= a.res.last_val_loss);
  CHECK(lines[a.res.best_epoch + 1]["val_loss"].get<double>() == a.res.best_val_loss);

  RunConfig other = tiny_config();
  other.train.seed = 2;
  std::ostringstream m2;
  run_stage1(other, tiny_dataset(), "h", scratch("s1c").string(), &m2);
  CHECK(m2.str() != a.metrics);
}

TEST_CASE("stage 2 freezes the backbone and passes omega through") {
  RunConfig cfg = tiny_config();
  cfg.discriminator.omega = 0.7;
  std::ostringstream m;
  const auto r = run_stage2(cfg, tiny_dataset(), "h", stage1().res.best_path, scratch("s2a").string(), &m);
  const auto lines = lines_of(m.str());
  REQUIRE(lines.size() == 5);
  CHECK(lines[0]["omega"].get<double>() == 0.7);
  CHECK(r.backbone_hash_at_freeze == r.backbone_hash_final);
  CHECK_FALSE(r.backbone_hash_at_freeze.empty());
  for (std::size_t e = 1; e < lines.size(); ++e) {
    CHECK(lines[e]["omega"].get<double>() == 0.7);
    CHECK(lines[e]["frozen"].get<bool>() == (e - 1 >= 2));
    if (e - 1 >= 2) CHECK(lines[e]["backbone_hash"].get<std::string>() == r.backbone_hash_at_freeze);
  }
  // the backbone moved while it was trainable
  CHECK(lines[1]["backbone_hash"] != lines[2]["backbone_hash"]);

  std::ostringstream again;
  run_stage2(cfg, tiny_dataset(), "h", stage1().res.best_path, scratch("s2b").string(), &again);
  CHECK(again.str() == m.str());

  const auto model = load_model(r.best_path);
  CHECK(model->cfg.discriminator.omega == 0.7);
  CHECK(model->support.rows() == 4);
  REQUIRE(model->support_refs.size() == 4);
  CHECK(model->support_refs[0].label == 0);
  CHECK(model->support_refs[3].label == 1);

  const auto det = detect_samples(*model, tiny_dataset().split.test, 2);
  CHECK(det.size() == tiny_dataset().split.test.size() * 8);
  for (const auto& d : det) {
    CHECK(d.score >= 0.0);
    CHECK(d.score <= 1.0);
    CHECK(d.label == (d.score >= 0.5 ? 1 : 0));
  }
  const auto rep = score_detections(det);
  CHECK(rep.tp + rep.fp + rep.fn + rep.tn == det.size());
  // same model, same data, same answer regardless of thread count
  const auto det1 = detect_samples(*model, tiny_dataset().split.test, 1);
  for (std::size_t i = 0; i < det.size(); ++i) CHECK(det1[i].score == det[i].score);

  RunConfig wrong = cfg;
  wrong.discriminator.layers = 3;
  CHECK_THROWS_AS(load_model(r.best_path, &wrong), Error);
  CHECK_NOTHROW(load_model(r.best_path, &cfg));
  CHECK_THROWS_AS(load_model(stage1().res.best_path), Error);
}

TEST_CASE("stage 2 rejects a backbone trained under another config") {
  RunConfig cfg = tiny_config();
  cfg.backbone.gat_out = 6;
  CHECK_THROWS_AS(run_stage2(cfg, tiny_dataset(), "h", stage1().res.best_path, scratch("s2c").string(), nullptr),
                  Error);
}

TEST_CASE("empty training split") {
  Dataset empty = tiny_dataset();
  empty.split.train.clear();
  CHECK_THROWS_AS(run_stage1(tiny_config(), empty, "h", scratch("e1").string(), nullptr), Error);
  CHECK_THROWS_AS(run_stage2(tiny_config(), empty, "h", stage1().res.best_path, scratch("e2").string(), nullptr),
                  Error);
}

TEST_CASE("omega sweep table") {
  RunConfig cfg = tiny_config();
  cfg.train.stage2_epochs = 1;
  cfg.train.freeze_backbone_after = 0;
  const auto rows = omega_sweep(cfg, tiny_dataset(), "h", stage1().res.best_path, {0.0, 0.4, 0.8}, {1, 2},
                                scratch("sweep").string());
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    REQUIRE(r.f1.size() == 2);
    CHECK(r.mean_f1 == doctest::Approx((r.f1[0] + r.f1[1]) / 2));
    CHECK(r.spread == doctest::Approx(std::abs(r.f1[0] - r.f1[1]) / 2));
  }
  CHECK(rows[1].omega == 0.4);
  CHECK_THROWS_AS(omega_sweep(cfg, tiny_dataset(), "h", stage1().res.best_path, {0.4}, {1}, scratch("s1").string()),
                  Error);
  CHECK_THROWS_AS(omega_sweep(cfg, tiny_dataset(), "h", stage1().res.best_path, {0.0, 0.4}, {}, scratch("s2").string()),
                  Error);
}

TEST_CASE("stream detection and plot data") {
  RunConfig cfg = tiny_config();
  cfg.train.stage2_epochs = 1;
  cfg.train.freeze_backbone_after = 0;
  const auto r = run_stage2(cfg, tiny_dataset(), "h", stage1().res.best_path, scratch("s2d").string(), nullptr);
  const auto model = load_model(r.best_path);
  StreamDetectOptions opt;
  opt.window = 16;
  opt.stride = 5;
  const auto det = detect_stream(*model, tiny_dataset(), opt);
  REQUIRE_FALSE(det.empty());
  CHECK(det.size() % 8 == 0);
  for (const auto& d : det) {
    CHECK(d.steps <= 16);
    CHECK(d.steps >= 8);
    const auto back = stream_detection_from_json_line(to_json_line(d));
    CHECK(back.sample_id == d.sample_id);
    CHECK(back.score == d.score);
    CHECK(back.label == d.label);
  }
  std::ostringstream csv;
  write_plot_csv(csv, tiny_dataset(), 3, det);
  std::istringstream in(csv.str());
  std::string header;
  std::getline(in, header);
  CHECK(header.find("truth_label") != std::string::npos);
  CHECK(header.find("predicted_label") != std::string::npos);
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == tiny_dataset().sample_count() * 8);  // W steps per sample
}
