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
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wsnad/checkpoint.hpp"
#include "wsnad/config.hpp"
#include "wsnad/metrics.hpp"

// Two-stage training (contrastive backbone pretraining, then joint
// few-shot training with a frozen tail), evaluation and the ω sweep.

namespace wsnad {

/// A node used as a support exemplar, by reference into the training split.
struct SupportRef {
  std::size_t sample_id = 0;
  std::size_t node = 0;
  int label = 0;
};

/// Backbone, discriminator and the support embeddings used at inference.
class DetectorModel {
 public:
  explicit DetectorModel(const RunConfig& cfg);

  RunConfig cfg;
  Backbone backbone;
  Discriminator discriminator;
  std::vector<SupportRef> support_refs;
  Mat support;  // 2K × gat_out: K normals then K anomalies
};

Checkpoint backbone_checkpoint(const Backbone& backbone, const RunConfig& cfg, const std::string& extra_json = "{}");
/// Copies a stage-1 (or model) checkpoint's backbone into `backbone`. The
/// backbone.* keys of the checkpoint must match cfg.
void load_backbone(Backbone& backbone, const Checkpoint& ckpt, const RunConfig& cfg);

Checkpoint model_checkpoint(const DetectorModel& model, const std::string& extra_json = "{}");
/// When `requested` is given, its backbone.* and discriminator.* keys must
/// match the checkpoint's (compat error with a diff otherwise).
std::unique_ptr<DetectorModel> load_model(const std::string& path, const RunConfig* requested = nullptr);

struct Stage1Result {
  std::string best_path, last_path;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double best_val_loss = 0.0;
  double last_val_loss = 0.0;
};

/// Writes backbone_best.json and backbone_last.json into out_dir; one JSON
/// line per epoch (after a header line) goes to `metrics` when non-null.
Stage1Result run_stage1(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                        const std::string& out_dir, std::ostream* metrics);

struct Stage2Result {
  std::string best_path, last_path;
  std::size_t best_epoch = 0;
  MetricsReport best_val, last_val;
  std::string backbone_hash_at_freeze, backbone_hash_final;
  std::size_t skipped_batches = 0;
};

/// Writes model_best.json (by validation F1) and model_last.json.
Stage2Result run_stage2(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                        const std::string& backbone_path, const std::string& out_dir, std::ostream* metrics);

struct Detection {
  std::size_t sample_id = 0;
  std::size_t node = 0;
  double score = 0.0;
  int label = 0;
  int truth = 0;
};

/// Node embeddings (N × gat_out) for every sample, computed without a tape.
std::vector<Mat> embed_samples(const Backbone& backbone, std::span<const AttributedGraphSample> samples,
                               std::size_t threads);
/// Classifies every row of `embeddings` in episodes of at most query_max
/// queries against `support`.
std::vector<NodeDecision> classify_embeddings(const Discriminator& disc, const Mat& support, const Mat& embeddings,
                                              std::size_t threads);
std::vector<Detection> detect_samples(const DetectorModel& model, std::span<const AttributedGraphSample> samples,
                                      std::size_t threads);
MetricsReport score_detections(const std::vector<Detection>& detections);

struct SweepRow {
  double omega = 0.0;
  std::vector<double> f1;  // per seed
  double mean_f1 = 0.0;
  double spread = 0.0;  // population standard deviation
};

/// Stage 2 per (ω, seed) from one stage-1 checkpoint; test F1 of each best
/// model. Cell outputs go to out_dir/omega_<ω>_seed_<s>/.
std::vector<SweepRow> omega_sweep(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                                  const std::string& backbone_path, const std::vector<double>& omegas,
                                  const std::vector<std::uint64_t>& seeds, const std::string& out_dir);

std::size_t resolve_threads(const TrainConfig& t);

}  // namespace wsnad
