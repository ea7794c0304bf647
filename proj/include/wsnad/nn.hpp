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
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "wsnad/autodiff.hpp"
#include "wsnad/random.hpp"

// Parameter storage, the small layers shared by the backbone and the
// discriminator, and the optimizer.

namespace wsnad::nn {

using ad::Gradients;
using ad::Parameter;
using ad::Tape;
using ad::Var;

/// Owns named parameters at stable addresses, in creation order.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter& create(const std::string& name, Mat value);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  std::deque<Parameter>& all() { return params_; }
  const std::deque<Parameter>& all() const { return params_; }
  void set_trainable(bool on);
  std::size_t scalar_count() const;

 private:
  std::deque<Parameter> params_;
};

/// Xavier-uniform fill: U(−a, a), a = sqrt(6 / (fan_in + fan_out)).
Mat xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct Linear {
  Parameter* weight = nullptr;  // in × out
  Parameter* bias = nullptr;    // 1 × out, may be null

  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng, bool with_bias = true);
  Var operator()(Tape& tape, const Var& x) const;
  std::size_t in() const { return weight->value.rows(); }
  std::size_t out() const { return weight->value.cols(); }
};

/// Per-row layer normalisation with learned gain and bias.
struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  double eps = 1e-5;

  static LayerNorm create(ParamStore& store, const std::string& name, std::size_t width, double eps);
  Var operator()(Tape& tape, const Var& x) const;
};

enum class OutputActivation { identity, sigmoid };

/// Two linear layers with an ELU in between; hidden width is twice the input.
struct Mlp {
  Linear hidden;
  Linear output;
  OutputActivation activation = OutputActivation::identity;

  static Mlp create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                    OutputActivation act, Rng& rng);
  Var operator()(Tape& tape, const Var& x) const;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  /// One update of every trainable parameter that has an entry in grads.
  void step(ParamStore& store, const Gradients& grads);
  long steps() const { return t_; }
  AdamConfig& config() { return cfg_; }

 private:
  struct Moments {
    Mat m, v;
  };
  AdamConfig cfg_;
  long t_ = 0;
  std::map<const Parameter*, Moments> state_;
};

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads. Work is
/// handed out in index order; fn must only touch per-index state.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Worker count from WSNAD_THREADS or the hardware, at least 1.
std::size_t default_threads();

}  // namespace wsnad::nn
