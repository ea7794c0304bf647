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

#include "wsnad/cross_retention.hpp"

#include "wsnad/kernels.hpp"
#include "wsnad/tensor_ops.hpp"

namespace wsnad {

CrossRetention CrossRetention::create(nn::ParamStore& store, const std::string& name, CrConfig cfg, Rng& rng) {
  if (cfg.modalities < 2)
    fail(ErrorKind::config, name + ": cross retention needs at least 2 modalities, got " +
                                std::to_string(cfg.modalities));
  if (cfg.qk_dim == 0 || cfg.qk_dim % 2 != 0)
    fail(ErrorKind::config, name + ": query/key width must be even, got " + std::to_string(cfg.qk_dim));
  if (cfg.slab_in == 0 || cfg.value_dim == 0) fail(ErrorKind::config, name + ": widths must be positive");
  CrossRetention cr;
  cr.cfg_ = cfg;
  for (std::size_t m = 0; m < cfg.modalities; ++m) {
    const std::string p = name + ".m" + std::to_string(m);
    cr.query.push_back(nn::Linear::create(store, p + ".wq", cfg.slab_in, cfg.qk_dim, rng, false));
    cr.key.push_back(nn::Linear::create(store, p + ".wk", cfg.slab_in, cfg.qk_dim, rng, false));
    cr.value.push_back(nn::Linear::create(store, p + ".wv", cfg.slab_in, cfg.value_dim, rng, false));
  }
  return cr;
}

void CrossRetention::check_input(std::size_t rows, std::size_t cols, std::size_t window) const {
  if (cols != cfg_.in_dim())
    fail(ErrorKind::shape, "cross retention input width " + std::to_string(cols) + ", expected " +
                               std::to_string(cfg_.in_dim()) + " (modality axis)");
  if (window == 0 || rows % window != 0)
    fail(ErrorKind::shape, "cross retention rows " + std::to_string(rows) + " not a multiple of window " +
                               std::to_string(window));
}

ad::Var CrossRetention::forward(ad::Tape& tape, const ad::Var& x, std::size_t window) const {
  check_input(x.rows(), x.cols(), window);
  const std::size_t M = cfg_.modalities, dq = cfg_.qk_dim;
  std::vector<ad::Var> wq, wk, wv;
  for (std::size_t m = 0; m < M; ++m) {
    wq.push_back(tape.param(*query[m].weight));
    wk.push_back(tape.param(*key[m].weight));
    wv.push_back(tape.param(*value[m].weight));
  }
  ad::Var q = ad::matmul(x, ad::block_diag(wq));
  ad::Var k = ad::matmul(x, ad::block_diag(wk));
  ad::Var v = ad::matmul(x, ad::block_diag(wv));
  q = ad::rotary(q, window, dq, 0, false, cfg_.rotary_base);
  k = ad::rotary(k, window, dq, 0, true, cfg_.rotary_base);
  k = ad::mul_row(k, tape.constant(key_pairing_signs(k.cols())));
  // Foreign-key sum: every slab receives the sum of all slabs minus itself.
  Mat cross(M * dq, M * dq);
  for (std::size_t a = 0; a < M; ++a)
    for (std::size_t b = 0; b < M; ++b)
      if (a != b)
        for (std::size_t i = 0; i < dq; ++i) cross(a * dq + i, b * dq + i) = 1.0;
  ad::Var k_cross = ad::matmul(k, tape.constant(std::move(cross)));
  const std::vector<double> gammas(M, cfg_.gamma);
  ad::Var o = ad::retention(q, k_cross, v, gammas, window);
  return ad::group_norm(o, M, cfg_.gn_eps);
}

ad::Var CrossRetention::forward_loop(ad::Tape& tape, const ad::Var& x, std::size_t window) const {
  check_input(x.rows(), x.cols(), window);
  const std::size_t M = cfg_.modalities, w = cfg_.slab_in;
  const ad::Var signs = tape.constant(key_pairing_signs(cfg_.qk_dim));
  std::vector<ad::Var> qs, ks, vs;
  for (std::size_t m = 0; m < M; ++m) {
    ad::Var slab = ad::slice_cols(x, m * w, (m + 1) * w);
    qs.push_back(ad::rotary(query[m](tape, slab), window, cfg_.qk_dim, 0, false, cfg_.rotary_base));
    ad::Var k = ad::rotary(key[m](tape, slab), window, cfg_.qk_dim, 0, true, cfg_.rotary_base);
    ks.push_back(ad::mul_row(k, signs));
    vs.push_back(value[m](tape, slab));
  }
  const double gamma[1] = {cfg_.gamma};
  std::vector<ad::Var> outs;
  for (std::size_t i = 0; i < M; ++i) {
    ad::Var k_cross;
    for (std::size_t j = 0; j < M; ++j) {
      if (j == i) continue;
      k_cross = k_cross.valid() ? ad::add(k_cross, ks[j]) : ks[j];
    }
    outs.push_back(ad::retention(qs[i], k_cross, vs[i], gamma, window));
  }
  return ad::group_norm(ad::concat_cols(outs), M, cfg_.gn_eps);
}

Mat CrossRetention::parallel(const Mat& x, std::size_t window) const {
  ad::Tape tape(false);
  return forward_loop(tape, tape.constant(x), window).value();
}

Mat CrossRetention::parallel_batched(const Mat& x, std::size_t window) const {
  ad::Tape tape(false);
  return forward(tape, tape.constant(x), window).value();
}

CrossState CrossRetention::initial_state(std::size_t streams) const {
  CrossState st;
  st.streams = streams;
  st.modalities = cfg_.modalities;
  st.s.assign(streams * cfg_.modalities, Mat(cfg_.qk_dim, cfg_.value_dim));
  return st;
}

Mat CrossRetention::step(const Mat& x_t, CrossState& state) const {
  const std::size_t M = cfg_.modalities, dq = cfg_.qk_dim, dv = cfg_.value_dim, w = cfg_.slab_in;
  if (state.modalities != M || state.s.size() != state.streams * M)
    fail(ErrorKind::state, "cross state has " + std::to_string(state.modalities) + " modalities, block has " +
                               std::to_string(M));
  if (x_t.rows() != state.streams || x_t.cols() != cfg_.in_dim())
    fail(ErrorKind::shape, "cross retention step input " + x_t.shape_str());
  const auto& kt = kernels::active();
  std::vector<Mat> q(M), k(M), v(M);
  for (std::size_t m = 0; m < M; ++m) {
    const Mat slab = x_t.cols_slice(m * w, (m + 1) * w);
    q[m] = matmul(slab, query[m].weight->value);
    k[m] = matmul(slab, key[m].weight->value);
    v[m] = matmul(slab, value[m].weight->value);
    rotary_inplace(q[m], 1, dq, state.step, false, cfg_.rotary_base);
    rotary_inplace(k[m], 1, dq, state.step, true, cfg_.rotary_base);
    for (std::size_t r = 0; r < k[m].rows(); ++r)
      for (std::size_t c = 1; c < dq; c += 2) k[m](r, c) = -k[m](r, c);
  }
  Mat out(state.streams, cfg_.out_dim());
  std::vector<double> kc(dq);
  for (std::size_t s = 0; s < state.streams; ++s) {
    for (std::size_t i = 0; i < M; ++i) {
      std::fill(kc.begin(), kc.end(), 0.0);
      for (std::size_t j = 0; j < M; ++j)
        if (j != i) kt.axpy(dq, 1.0, k[j].data() + s * dq, kc.data());
      Mat& S = state.at(s, i);
      S *= cfg_.gamma;
      kt.gemm_tn(dq, dv, 1, kc.data(), v[i].data() + s * dv, S.data());
      kt.gemm(1, dv, dq, q[i].data() + s * dq, S.data(), out.data() + s * out.cols() + i * dv);
    }
  }
  group_norm_rows(out, M, cfg_.gn_eps);
  ++state.step;
  return out;
}

}  // namespace wsnad
