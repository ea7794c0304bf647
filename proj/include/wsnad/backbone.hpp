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
#include <string>
#include <vector>

#include "wsnad/cross_retention.hpp"
#include "wsnad/nn.hpp"
#include "wsnad/retention.hpp"

// Feature extractor: per-modality input embedding, L layers of
// (multi-scale retention, cross retention) with pre-norm residuals, fusion
// of all layer outputs, and graph attention across nodes. One graph sample
// (N nodes × M modalities × W steps) maps to an N × out_dim embedding.

namespace wsnad {

struct BackboneConfig {
  std::size_t layers = 3;
  std::size_t heads = 2;
  std::size_t d_model = 12;
  std::size_t msr_qk_dim = 4;  // per head
  std::size_t cr_qk_dim = 4;   // per modality
  std::size_t modalities = 3;
  std::size_t window = 32;
  std::size_t gat_out = 12;
  double rotary_base = 10000.0;
  double gn_eps = 1e-6;
  double ln_eps = 1e-5;
  double gat_slope = 0.2;

  /// Throws a config error naming the first inconsistency.
  void validate() const;
  std::size_t cr_value_dim() const { return d_model / modalities; }
};

/// Fusion weights: dL → d per step, mean over the window, then d → d.
struct FpnParams {
  nn::Linear first;
  nn::Linear second;
};

struct GatParams {
  nn::Linear proj;                    // d → out, no bias
  ad::Parameter* attn_src = nullptr;  // out × 1
  ad::Parameter* attn_dst = nullptr;  // out × 1
  double slope = 0.2;
};

/// layer_outputs: L tensors of (N·W) × d. Returns N × d.
ad::Var fpn_fuse(ad::Tape& tape, std::span<const ad::Var> layer_outputs, std::size_t window, const FpnParams& p);

/// x: N × d_in, adjacency N × N with a nonzero diagonal. Returns N × out.
/// When attention is non-null it receives the N × N coefficients.
ad::Var gat_forward(ad::Tape& tape, const ad::Var& x, const Mat& adjacency, const GatParams& p,
                    Mat* attention = nullptr);

class StreamHandle;

class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, std::uint64_t seed);
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  /// features: (N·W) × M, adjacency N × N. Returns N × gat_out.
  ad::Var forward(ad::Tape& tape, const Mat& features, const Mat& adjacency) const;
  /// Same, for a differentiable feature input.
  ad::Var forward(ad::Tape& tape, const ad::Var& features, const Mat& adjacency) const;
  /// Per-layer outputs ((N·W) × d each) before fusion.
  std::vector<ad::Var> layer_outputs(ad::Tape& tape, const ad::Var& features) const;
  Mat embed(const Mat& features, const Mat& adjacency) const;

  StreamHandle stream(const Mat& adjacency) const;

  const BackboneConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

 private:
  friend class StreamHandle;
  struct Layer {
    nn::LayerNorm norm_msr;
    MultiScaleRetention msr;
    nn::LayerNorm norm_cr;
    CrossRetention cr;
  };

  BackboneConfig cfg_;
  nn::ParamStore store_;
  std::vector<ad::Parameter*> embed_weight_;  // one 1 × (d/M) row per modality
  ad::Parameter* embed_bias_ = nullptr;
  std::vector<Layer> layers_;
  FpnParams fpn_;
  GatParams gat_;
};

/// Recurrent inference for one graph. Each push() advances every layer by
/// one time step in O(1) work per node; once W steps have been seen the
/// embedding of the most recent W steps is available.
class StreamHandle {
 public:
  /// x_t: N × M, one row per node.
  void push(const Mat& x_t);
  bool warm() const { return steps_ >= static_cast<long>(cfg().window); }
  long steps() const { return steps_; }
  /// Requires warm(); otherwise a state error reports the steps remaining.
  Mat embedding() const;
  /// Per-layer output of the latest step, N × d.
  const Mat& last_layer_output(std::size_t layer) const;

 private:
  friend class Backbone;
  StreamHandle(const Backbone& model, const Mat& adjacency);
  const BackboneConfig& cfg() const { return model_->cfg_; }

  const Backbone* model_;
  Mat adjacency_;
  std::size_t nodes_;
  long steps_ = 0;
  std::vector<RetentionState> msr_;
  std::vector<CrossState> cr_;
  // rings_[l] holds W slots of N × d, slot = step % W.
  std::vector<std::vector<Mat>> rings_;
  std::vector<Mat> latest_;
};

/// (N·W) × M row layout of an N × M × W tensor stored node, modality, time.
Mat window_to_rows(const std::vector<double>& x, std::size_t nodes, std::size_t modalities, std::size_t window);

}  // namespace wsnad
