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

#include "wsnad/retention.hpp"

#include <cmath>

#include "wsnad/kernels.hpp"
#include "wsnad/tensor_ops.hpp"

namespace wsnad {

std::vector<double> head_gammas(long heads) {
  if (heads <= 0) fail(ErrorKind::config, "head count must be positive, got " + std::to_string(heads));
  std::vector<double> g(static_cast<std::size_t>(heads));
  for (long i = 0; i < heads; ++i) g[static_cast<std::size_t>(i)] = 1.0 - std::ldexp(1.0, -5 - static_cast<int>(i));
  return g;
}

Mat build_decay_mask(std::size_t window, double gamma) { return decay_mask(window, gamma); }

Mat apply_rotary(const Mat& z, std::size_t block, std::size_t head_dim, long pos0, bool conjugate, double base) {
  Mat out = z;
  rotary_inplace(out, block, head_dim, pos0, conjugate, base);
  return out;
}

Mat key_pairing_signs(std::size_t width) {
  Mat s(1, width, 1.0);
  for (std::size_t c = 1; c < width; c += 2) s[c] = -1.0;
  return s;
}

MultiScaleRetention MultiScaleRetention::create(nn::ParamStore& store, const std::string& name, MsrConfig cfg,
                                                Rng& rng) {
  if (cfg.heads == 0) fail(ErrorKind::config, name + ": head count must be positive");
  if (cfg.qk_dim == 0 || cfg.qk_dim % 2 != 0)
    fail(ErrorKind::config, name + ": query/key width per head must be even, got " + std::to_string(cfg.qk_dim));
  if (cfg.value_dim == 0 || cfg.d_in == 0) fail(ErrorKind::config, name + ": widths must be positive");
  if (cfg.gammas.empty()) cfg.gammas = head_gammas(static_cast<long>(cfg.heads));
  if (cfg.gammas.size() != cfg.heads) fail(ErrorKind::config, name + ": one decay per head required");
  MultiScaleRetention m;
  m.cfg_ = cfg;
  m.query = nn::Linear::create(store, name + ".wq", cfg.d_in, cfg.heads * cfg.qk_dim, rng, false);
  m.key = nn::Linear::create(store, name + ".wk", cfg.d_in, cfg.heads * cfg.qk_dim, rng, false);
  m.value = nn::Linear::create(store, name + ".wv", cfg.d_in, cfg.heads * cfg.value_dim, rng, false);
  return m;
}

ad::Var MultiScaleRetention::forward(ad::Tape& tape, const ad::Var& x, std::size_t window) const {
  if (x.cols() != cfg_.d_in)
    fail(ErrorKind::shape, "retention input width " + std::to_string(x.cols()) + ", expected " +
                               std::to_string(cfg_.d_in));
  if (window == 0 || x.rows() % window != 0)
    fail(ErrorKind::shape, "retention input rows " + std::to_string(x.rows()) + " not a multiple of window " +
                               std::to_string(window));
  ad::Var q = ad::rotary(query(tape, x), window, cfg_.qk_dim, 0, false, cfg_.rotary_base);
  ad::Var k = ad::rotary(key(tape, x), window, cfg_.qk_dim, 0, true, cfg_.rotary_base);
  k = ad::mul_row(k, tape.constant(key_pairing_signs(k.cols())));
  ad::Var v = value(tape, x);
  ad::Var o = ad::retention(q, k, v, cfg_.gammas, window);
  return ad::group_norm(o, cfg_.heads, cfg_.gn_eps);
}

Mat MultiScaleRetention::parallel(const Mat& x, std::size_t window) const {
  ad::Tape tape(false);
  return forward(tape, tape.constant(x), window).value();
}

RetentionState MultiScaleRetention::initial_state(std::size_t streams) const {
  RetentionState st;
  st.streams = streams;
  st.heads = cfg_.heads;
  st.s.assign(streams * cfg_.heads, Mat(cfg_.qk_dim, cfg_.value_dim));
  return st;
}

Mat MultiScaleRetention::step(const Mat& x_t, RetentionState& state) const {
  if (state.heads != cfg_.heads || state.s.size() != state.streams * cfg_.heads)
    fail(ErrorKind::state, "retention state has " + std::to_string(state.heads) + " heads, block has " +
                               std::to_string(cfg_.heads));
  if (x_t.rows() != state.streams || x_t.cols() != cfg_.d_in)
    fail(ErrorKind::shape, "retention step input " + x_t.shape_str() + " for " + std::to_string(state.streams) +
                               " streams of width " + std::to_string(cfg_.d_in));
  const auto& kt = kernels::active();
  Mat q = matmul(x_t, query.weight->value);
  Mat k = matmul(x_t, key.weight->value);
  const Mat v = matmul(x_t, value.weight->value);
  rotary_inplace(q, 1, cfg_.qk_dim, state.step, false, cfg_.rotary_base);
  rotary_inplace(k, 1, cfg_.qk_dim, state.step, true, cfg_.rotary_base);
  for (std::size_t r = 0; r < k.rows(); ++r)
    for (std::size_t c = 1; c < k.cols(); c += 2) k(r, c) = -k(r, c);

  const std::size_t dq = cfg_.qk_dim, dv = cfg_.value_dim;
  Mat out(state.streams, cfg_.out_dim());
  for (std::size_t s = 0; s < state.streams; ++s) {
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      Mat& S = state.at(s, h);
      S *= cfg_.gammas[h];
      // S += k_hᵀ v_h (outer product)
      kt.gemm_tn(dq, dv, 1, k.data() + s * k.cols() + h * dq, v.data() + s * v.cols() + h * dv, S.data());
      kt.gemm(1, dv, dq, q.data() + s * q.cols() + h * dq, S.data(), out.data() + s * out.cols() + h * dv);
    }
  }
  group_norm_rows(out, cfg_.heads, cfg_.gn_eps);
  ++state.step;
  return out;
}

}  // namespace wsnad
