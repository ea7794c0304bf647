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

// Multi-scale retention. The parallel form processes whole windows of rows
// at once; the recurrent form advances one time step per call with a
// constant-size state per head. Both share the rotary encoding, key pairing
// and per-position group normalisation so they agree to rounding.

namespace wsnad {

/// γ_i = 1 − 2^(−5−i), i = 0..h−1.
std::vector<double> head_gammas(long heads);

/// W×W lower-triangular mask with entries γ^(t1−t2).
Mat build_decay_mask(std::size_t window, double gamma);

/// Returns z with every row's coordinate pairs rotated. Row r is at position
/// pos0 + r % block; head_dim is the rotation period of the columns.
Mat apply_rotary(const Mat& z, std::size_t block, std::size_t head_dim, long pos0, bool conjugate,
                 double base = 10000.0);

/// Row of ±1 that negates the odd column of every pair. Multiplying a
/// conjugate-rotated key by it turns the real dot product q·k into the real
/// part of the complex product of the two rotated vectors, so scores depend
/// only on the position difference.
Mat key_pairing_signs(std::size_t width);

struct MsrConfig {
  std::size_t d_in = 0;
  std::size_t heads = 1;
  std::size_t qk_dim = 0;     // per head, even
  std::size_t value_dim = 0;  // per head
  double rotary_base = 10000.0;
  double gn_eps = 1e-6;
  std::vector<double> gammas;  // empty: head_gammas(heads)

  std::size_t out_dim() const { return heads * value_dim; }
};

/// Per-stream, per-head state matrices (qk_dim × value_dim).
struct RetentionState {
  std::size_t streams = 0;
  std::size_t heads = 0;
  long step = 0;
  std::vector<Mat> s;  // index stream * heads + head

  Mat& at(std::size_t stream, std::size_t head) { return s[stream * heads + head]; }
};

class MultiScaleRetention {
 public:
  static MultiScaleRetention create(nn::ParamStore& store, const std::string& name, MsrConfig cfg, Rng& rng);

  /// x: (streams·window) × d_in with each stream's steps contiguous.
  ad::Var forward(ad::Tape& tape, const ad::Var& x, std::size_t window) const;
  Mat parallel(const Mat& x, std::size_t window) const;

  RetentionState initial_state(std::size_t streams) const;
  /// x_t: streams × d_in, one row per stream. Returns streams × out_dim.
  Mat step(const Mat& x_t, RetentionState& state) const;

  const MsrConfig& config() const { return cfg_; }
  const std::vector<double>& gammas() const { return cfg_.gammas; }
  nn::Linear query, key, value;

 private:
  MsrConfig cfg_;
};

}  // namespace wsnad
