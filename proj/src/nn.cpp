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

#include "wsnad/nn.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace wsnad::nn {

Parameter& ParamStore::create(const std::string& name, Mat value) {
  if (find(name) != nullptr) fail(ErrorKind::config, "duplicate parameter name " + name);
  params_.push_back(Parameter{name, std::move(value), true});
  return params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamStore::set_trainable(bool on) {
  for (auto& p : params_) p.trainable = on;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Mat xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(fan_in, fan_out);
  for (double& v : w.storage()) v = rng.uniform(-a, a);
  return w;
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.weight = &store.create(name + ".weight", xavier_uniform(in, out, rng));
  if (with_bias) l.bias = &store.create(name + ".bias", Mat(1, out));
  return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  Var y = ad::matmul(x, tape.param(*weight));
  if (bias != nullptr) y = ad::add_row(y, tape.param(*bias));
  return y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, std::size_t width, double eps) {
  LayerNorm ln;
  ln.gain = &store.create(name + ".gain", Mat(1, width, 1.0));
  ln.bias = &store.create(name + ".bias", Mat(1, width));
  ln.eps = eps;
  return ln;
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  Var y = ad::group_norm(x, 1, eps);
  y = ad::mul_row(y, tape.param(*gain));
  return ad::add_row(y, tape.param(*bias));
}

Mlp Mlp::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, OutputActivation act,
                Rng& rng) {
  Mlp m;
  m.hidden = Linear::create(store, name + ".fc1", in, 2 * in, rng);
  m.output = Linear::create(store, name + ".fc2", 2 * in, out, rng);
  m.activation = act;
  return m;
}

Var Mlp::operator()(Tape& tape, const Var& x) const {
  Var y = output(tape, ad::elu(hidden(tape, x)));
  return activation == OutputActivation::sigmoid ? ad::sigmoid(y) : y;
}

void Adam::step(ParamStore& store, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    const Mat* g = grads.find(&p);
    if (g == nullptr) continue;
    auto [it, fresh] = state_.try_emplace(&p);
    if (fresh) {
      it->second.m = Mat(p.value.rows(), p.value.cols());
      it->second.v = Mat(p.value.rows(), p.value.cols());
    }
    Mat& m = it->second.m;
    Mat& v = it->second.v;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = (*g)[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::size_t default_threads() {
  if (const char* env = std::getenv("WSNAD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace wsnad::nn
