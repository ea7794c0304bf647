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
#include <span>
#include <vector>

#include "wsnad/backbone.hpp"
#include "wsnad/data_pipeline.hpp"
#include "wsnad/nn.hpp"

// Unsupervised node-versus-subgraph contrast used to pretrain the backbone.

namespace wsnad {

struct PretrainConfig {
  std::size_t walk_len = 3;
  std::size_t k_neg = 5;
  double tau = 0.1;
};

/// {center} ∪ neighbours(center) ∪ nodes visited by a walk_len-step walk.
/// Returned sorted ascending.
std::vector<std::size_t> sample_subgraph(const Mat& adjacency, std::size_t center, std::size_t walk_len, Rng& rng);

std::vector<double> pool_subgraph(const Mat& embeddings, const std::vector<std::size_t>& members);

/// Pearson correlation; 0 when either vector has σ < 1e-12.
double pearson(std::span<const double> a, std::span<const double> b);

struct SubgraphSample {
  std::size_t center = 0;
  std::vector<std::size_t> members;
  std::vector<double> pooled;
};

struct ContrastEpisode {
  std::vector<double> anchor;
  std::size_t positive = 0;            // index into the candidate list
  std::vector<std::size_t> negatives;  // indices into the candidate list
  std::vector<double> correlations;    // ρ(anchor, candidate) per candidate
  double tau = 0.1;
};

/// Positive: highest ρ; negatives: the k_neg lowest. Ties go to the lower
/// center id.
ContrastEpisode select_pairs(const std::vector<double>& anchor, const std::vector<SubgraphSample>& candidates,
                             std::size_t k_neg, double tau);

/// −log softmax of the positive logit among {positive, negatives}, logits = n_a·s / τ.
double info_nce(std::span<const double> anchor, std::span<const double> positive,
                 const std::vector<std::vector<double>>& negatives, double tau);
ad::Var info_nce(ad::Tape& tape, const ad::Var& anchor, const ad::Var& positive, const ad::Var& negatives, double tau);

/// Contrast loss for one graph's node embeddings (N × d). Returns an invalid
/// Var when the graph has fewer than k_neg + 2 nodes.
ad::Var graph_contrast_loss(ad::Tape& tape, const ad::Var& embeddings, const Mat& adjacency,
                            const PretrainConfig& cfg, Rng& rng);

/// One optimizer step over a batch of graphs; returns the mean loss of the
/// graphs that were used (NaN if none). Graph g draws from
/// derive_seed(seed, g).
double pretrain_step(Backbone& backbone, std::span<const AttributedGraphSample* const> batch, nn::Adam& optimizer,
                     const PretrainConfig& cfg, std::uint64_t seed, std::size_t threads);

/// Mean contrast loss over graphs without updating anything.
double contrast_loss_eval(const Backbone& backbone, std::span<const AttributedGraphSample* const> graphs,
                          const PretrainConfig& cfg, std::uint64_t seed, std::size_t threads);

}  // namespace wsnad
