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
#include <deque>
#include <string>
#include <vector>

#include "wsnad/nn.hpp"

// Few-shot node classifier over an episode of node embeddings. An instance
// graph (features + labels, pairwise similarity edges) and a distribution
// graph (similarity to each support member) are refined alternately for L
// rounds; every round yields class probabilities for the query members.

namespace wsnad {

struct DiscriminatorConfig {
  std::size_t layers = 5;
  std::size_t k = 5;  // support members per class
  double lambda_ins = 0.5;
  double lambda_dis = 0.5;
  double tau = 0.1;
  std::size_t buffer_capacity = 64;
  std::size_t query_max = 64;
  double omega = 0.4;

  void validate() const;
};

inline constexpr std::size_t kClasses = 2;

class AnomalyBuffer {
 public:
  explicit AnomalyBuffer(std::size_t capacity);
  void push(std::vector<double> v);
  /// The `count` most recent entries, oldest first.
  std::vector<std::vector<double>> take(std::size_t count) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<std::vector<double>>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<std::vector<double>> entries_;
};

struct EpisodeMember {
  bool from_buffer = false;
  std::size_t row = 0;  // row of the feature matrix, or of EpisodeBatch::buffer_rows
  int label = -1;       // true label; −1 when unlabeled
};

/// Member order: K support normals, K support anomalies, labeled queries,
/// unlabeled queries. Member 0 is the contrastive anchor, members 1..K−1 its
/// positives and members K..2K−1 its negatives.
struct EpisodeBatch {
  std::size_t k = 0;
  std::vector<EpisodeMember> members;
  std::size_t labeled_queries = 0;
  std::size_t unlabeled_queries = 0;
  Mat buffer_rows;

  std::size_t support() const { return 2 * k; }
  std::size_t size() const { return members.size(); }
  std::size_t queries() const { return labeled_queries + unlabeled_queries; }
};

/// features: one row per candidate node; labels: −1, 0 or 1 per row.
/// Labeled anomalies of this batch are pushed to the buffer afterwards.
EpisodeBatch sample_episode(const Mat& features, const std::vector<int>& labels, AnomalyBuffer& buffer,
                            std::size_t k, std::size_t query_max, Rng& rng);

/// Episode whose support is fixed (rows of `support_features`, K normals
/// then K anomalies) and whose queries are `query_rows` of `features`.
/// Support rows are referenced through buffer_rows.
EpisodeBatch fixed_support_episode(const Mat& support_features, std::size_t k, std::size_t feature_rows_begin,
                                   std::size_t feature_rows_end);

/// Member features (size × d) on a tape from batch features and the episode's buffer rows.
ad::Var gather_members(ad::Tape& tape, const ad::Var& features, const EpisodeBatch& ep);

struct DualGraphState {
  std::size_t support = 0;
  std::size_t members = 0;
  std::vector<ad::Var> v_ins, e_ins, v_dis, e_dis;  // index = layer 0..L
  std::vector<ad::Var> log_pred_ins, log_pred_dis;  // index = layer 1..L stored at l−1; queries × 2
};

class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& cfg, std::size_t feature_dim, std::uint64_t seed);
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  /// Layer-0 graphs from member features (size × d).
  DualGraphState init_graphs(ad::Tape& tape, const ad::Var& x, const EpisodeBatch& ep) const;
  /// Round l ≥ 1: instance edges, distribution nodes, distribution edges, instance nodes.
  void propagate_layer(ad::Tape& tape, DualGraphState& g, std::size_t l) const;
  /// Appends round l's query log-probabilities to g.
  void predict_labels(ad::Tape& tape, DualGraphState& g, std::size_t l) const;
  /// init + L rounds + predictions.
  DualGraphState run(ad::Tape& tape, const ad::Var& x, const EpisodeBatch& ep) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return feature_dim_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  struct Round {
    nn::Mlp ins_edge, dis_edge, ins_to_dis, dis_to_ins;
  };
  const Round& round(std::size_t l) const { return rounds_.at(l); }

 private:
  DiscriminatorConfig cfg_;
  std::size_t feature_dim_;
  nn::ParamStore store_;
  std::vector<Round> rounds_;  // 0..L; round 0 only uses the edge networks
  nn::Linear head_;            // (d + 2) → 2, shared across rounds
};

/// Sum over labeled queries of −log p(label) for each round: (ins, dis) per layer.
struct LayerLosses {
  std::vector<ad::Var> ins, dis;
};
LayerLosses classification_losses(ad::Tape& tape, const DualGraphState& g, const EpisodeBatch& ep);

/// −log(Σ_pos exp(a·p/τ) / Σ_neg exp(a·n/τ)).
ad::Var contrastive_loss_disc(ad::Tape& tape, const ad::Var& anchor, const ad::Var& positives,
                              const ad::Var& negatives, double tau);
double contrastive_loss_disc(const Mat& anchor, const Mat& positives, const Mat& negatives, double tau);

/// Rows scaled to unit L2 norm; the training loop feeds the contrastive
/// term normalised members so it cannot be lowered by inflating norms.
ad::Var normalize_rows(const ad::Var& x, double eps = 1e-12);

/// ω·cont + (1−ω)·Σ_l 2^−(L−l)·(dis_l + ins_l).
ad::Var joint_loss(double omega, const ad::Var& cont, const LayerLosses& losses);
std::vector<double> layer_weights(std::size_t layers);

struct NodeDecision {
  double score = 0.0;
  int label = 0;
};
/// Class-1 mass averaged over the two graphs' final-round predictions.
NodeDecision decide(double p_ins_anomalous, double p_dis_anomalous);
std::vector<NodeDecision> classify_nodes(const DualGraphState& g);

}  // namespace wsnad
