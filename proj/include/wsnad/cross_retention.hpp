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
#include <string>
#include <vector>

#include "wsnad/nn.hpp"
#include "wsnad/retention.hpp"

// Cross-modal retention: the input's columns are M equal modality slabs and
// every modality's queries retain against the summed keys of all the other
// modalities. Three evaluation routes are provided (per-modality loop,
// modality-batched, and recurrent) which agree to rounding.

namespace wsnad {

struct CrConfig {
  std::size_t modalities = 2;
  std::size_t slab_in = 0;    // input width per modality
  std::size_t qk_dim = 0;     // per modality, even
  std::size_t value_dim = 0;  // per modality
  double gamma = 1.0 - 1.0 / 32.0;
  double rotary_base = 10000.0;
  double gn_eps = 1e-6;

  std::size_t in_dim() const { return modalities * slab_in; }
  std::size_t out_dim() const { return modalities * value_dim; }
};

struct CrossState {
  std::size_t streams = 0;
  std::size_t modalities = 0;
  long step = 0;
  std::vector<Mat> s;  // index stream * modalities + modality, qk_dim × value_dim

  Mat& at(std::size_t stream, std::size_t m) { return s[stream * modalities + m]; }
};

class CrossRetention {
 public:
  static CrossRetention create(nn::ParamStore& store, const std::string& name, CrConfig cfg, Rng& rng);

  /// Modality-batched route; x is (streams·window) × in_dim.
  ad::Var forward(ad::Tape& tape, const ad::Var& x, std::size_t window) const;
  /// Per-modality loop route.
  ad::Var forward_loop(ad::Tape& tape, const ad::Var& x, std::size_t window) const;

  Mat parallel(const Mat& x, std::size_t window) const;
  Mat parallel_batched(const Mat& x, std::size_t window) const;

  CrossState initial_state(std::size_t streams) const;
  Mat step(const Mat& x_t, CrossState& state) const;

  const CrConfig& config() const { return cfg_; }
  std::vector<nn::Linear> query, key, value;  // one per modality

 private:
  void check_input(std::size_t rows, std::size_t cols, std::size_t window) const;
  CrConfig cfg_;
};

}  // namespace wsnad
