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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/oracles.hpp"
#include "wsnad/cross_retention.hpp"
#include "wsnad/retention.hpp"
#include "wsnad/tensor_ops.hpp"

using namespace wsnad;
using oracle::random_mat;

namespace {

Mat stream_rows(const Mat& x, std::size_t stream, std::size_t window) {
  return x.rows_slice(stream * window, (stream + 1) * window);
}

double dot(const Mat& a, const Mat& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("head decays") {
  CHECK(head_gammas(1) == std::vector<double>{0.96875});
  CHECK(head_gammas(4) == std::vector<double>{0.96875, 0.984375, 0.9921875, 0.99609375});
  for (double g : head_gammas(12)) CHECK(g < 1.0);
  CHECK_THROWS_AS(head_gammas(0), Error);
}

TEST_CASE("decay mask") {
  const Mat d = build_decay_mask(3, 0.5);
  const Mat want{{1, 0, 0}, {0.5, 1, 0}, {0.25, 0.5, 1}};
  CHECK(max_abs_diff(d, want) == 0.0);
  const Mat ones = build_decay_mask(5, 1.0);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(ones(i, j) == (j <= i ? 1.0 : 0.0));
  const Mat g = build_decay_mask(6, 0.3);
  for (std::size_t i = 0; i < 6; ++i) CHECK(g(i, i) == 1.0);
}

TEST_CASE("rotary encoding") {
  Rng rng(1);
  const Mat z = random_mat(1, 8, rng);
  CHECK(max_abs_diff(apply_rotary(z, 1, 8, 0, false), z) == 0.0);

  const Mat many = random_mat(12, 8, rng);
  const Mat rot = apply_rotary(many, 12, 4, 5, false);
  for (std::size_t r = 0; r < 12; ++r)
    for (std::size_t c = 0; c < 8; c += 2) {
      const double before = std::hypot(many(r, c), many(r, c + 1));
      const double after = std::hypot(rot(r, c), rot(r, c + 1));
      CHECK(std::abs(before - after) < 1e-12);
    }

  // relative position: the paired product only sees p1 − p2
  const Mat signs = key_pairing_signs(8);
  for (long p1 : {0L, 3L, 17L, 200L})
    for (long p2 : {0L, 2L, 17L, 150L}) {
      const Mat q = random_mat(1, 8, rng), k = random_mat(1, 8, rng);
      Mat lhs_k = apply_rotary(k, 1, 8, p2, true);
      Mat rhs_k = k;
      for (std::size_t c = 0; c < 8; ++c) {
        lhs_k[c] *= signs[c];
        rhs_k[c] *= signs[c];
      }
      const double lhs = dot(apply_rotary(q, 1, 8, p1, false), lhs_k);
      const double rhs = dot(apply_rotary(q, 1, 8, p1 - p2, false), rhs_k);
      CHECK(std::abs(lhs - rhs) < 1e-9);
    }
  CHECK_THROWS_AS(apply_rotary(Mat(1, 3), 1, 3, 0, false), Error);
}

TEST_CASE("retention matches the complex-valued reference") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    nn::ParamStore store;
    MsrConfig cfg;
    cfg.d_in = 5;
    cfg.heads = 1 + trial % 2;
    cfg.qk_dim = 4;
    cfg.value_dim = 3;
    const auto m = MultiScaleRetention::create(store, "msr", cfg, rng);
    const std::size_t streams = 2, W = 8 + 4 * static_cast<std::size_t>(trial % 3);
    const Mat x = random_mat(streams * W, 5, rng);
    const Mat par = m.parallel(x, W);
    for (std::size_t s = 0; s < streams; ++s) {
      const Mat want = oracle::msr(stream_rows(x, s, W), m.query.weight->value, m.key.weight->value,
                                   m.value.weight->value, m.gammas(), cfg.rotary_base, cfg.gn_eps);
      CHECK(max_abs_diff(stream_rows(par, s, W), want) < 1e-9);
    }
  }
}

TEST_CASE("retention parallel and recurrent forms agree") {
  Rng rng(3);
  for (std::size_t W : {1u, 8u, 16u, 64u})
    for (std::size_t heads : {1u, 2u}) {
      nn::ParamStore store;
      MsrConfig cfg;
      cfg.d_in = 6;
      cfg.heads = heads;
      cfg.qk_dim = 4;
      cfg.value_dim = 4;
      const auto m = MultiScaleRetention::create(store, "msr", cfg, rng);
      const Mat x = random_mat(3 * W, 6, rng);
      CHECK(max_abs_diff(m.parallel(x, W), oracle::stacked_steps(m, m.initial_state(3), x, 3, W)) < 1e-8);
    }
}

TEST_CASE("retention single step and memoryless head") {
  Rng rng(4);
  nn::ParamStore store;
  MsrConfig cfg;
  cfg.d_in = 3;
  cfg.heads = 2;
  cfg.qk_dim = 2;
  cfg.value_dim = 8;
  const auto m = MultiScaleRetention::create(store, "msr", cfg, rng);
  CHECK(m.config().out_dim() == 16);
  const Mat x1 = random_mat(1, 3, rng);
  // W = 1: GN(q kᵀ v) with q, k read as complex pairs and no rotation
  const Mat q = oracle::naive_matmul(x1, m.query.weight->value), k = oracle::naive_matmul(x1, m.key.weight->value),
            v = oracle::naive_matmul(x1, m.value.weight->value);
  Mat want(1, 16);
  for (std::size_t h = 0; h < 2; ++h) {
    const double s = q(0, 2 * h) * k(0, 2 * h) - q(0, 2 * h + 1) * k(0, 2 * h + 1);
    for (std::size_t c = 0; c < 8; ++c) want(0, h * 8 + c) = s * v(0, h * 8 + c);
  }
  oracle::group_norm(want, 2, cfg.gn_eps);
  CHECK(max_abs_diff(m.parallel(x1, 1), want) < 1e-12);

  auto st = m.initial_state(1);
  for (const Mat& s : st.s) CHECK(oracle::frob(s) == 0.0);

  // the second recurrent output equals row 1 of the parallel form
  const Mat x = random_mat(2, 3, rng);
  m.step(x.rows_slice(0, 1), st);
  const Mat o1 = m.step(x.rows_slice(1, 2), st);
  CHECK(max_abs_diff(o1, m.parallel(x, 2).rows_slice(1, 2)) < 1e-8);

  MsrConfig zero = cfg;
  zero.heads = 1;
  zero.gammas = {0.0};
  nn::ParamStore s2;
  const auto z = MultiScaleRetention::create(s2, "z", zero, rng);
  auto zs = z.initial_state(1);
  z.step(random_mat(1, 3, rng), zs);
  const Mat xt = random_mat(1, 3, rng);
  auto fresh = z.initial_state(1);
  fresh.step = zs.step;  // same position, no history
  CHECK(max_abs_diff(z.step(xt, zs), z.step(xt, fresh)) < 1e-12);
}

TEST_CASE("retention rejects mismatched state and shapes") {
  Rng rng(5);
  nn::ParamStore store;
  MsrConfig cfg;
  cfg.d_in = 4;
  cfg.heads = 2;
  cfg.qk_dim = 2;
  cfg.value_dim = 2;
  const auto m = MultiScaleRetention::create(store, "msr", cfg, rng);
  RetentionState bad;
  bad.streams = 1;
  bad.heads = 3;
  bad.s.assign(3, Mat(2, 2));
  try {
    m.step(Mat(1, 4), bad);
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  CHECK_THROWS_AS(m.parallel(Mat(7, 4), 2), Error);
  MsrConfig odd = cfg;
  odd.qk_dim = 3;
  CHECK_THROWS_AS(MultiScaleRetention::create(store, "odd", odd, rng), Error);
}

TEST_CASE("cross retention matches the reference and the two-modality reduction") {
  Rng rng(6);
  for (std::size_t M : {2u, 3u}) {
    nn::ParamStore store;
    CrConfig cfg;
    cfg.modalities = M;
    cfg.slab_in = 3;
    cfg.qk_dim = 4;
    cfg.value_dim = 8;
    const auto cr = CrossRetention::create(store, "cr", cfg, rng);
    CHECK(cfg.out_dim() == M * 8);
    const std::size_t W = 16;
    const Mat x = random_mat(2 * W, cfg.in_dim(), rng);
    std::vector<Mat> wq, wk, wv;
    for (std::size_t m = 0; m < M; ++m) {
      wq.push_back(cr.query[m].weight->value);
      wk.push_back(cr.key[m].weight->value);
      wv.push_back(cr.value[m].weight->value);
    }
    const Mat par = cr.parallel(x, W);
    for (std::size_t s = 0; s < 2; ++s) {
      const Mat want = oracle::cross_retention(stream_rows(x, s, W), wq, wk, wv, cfg.gamma, cfg.rotary_base, cfg.gn_eps);
      CHECK(max_abs_diff(stream_rows(par, s, W), want) < 1e-9);
    }
    if (M == 2) {
      // modality 0 retains against modality 1's keys only, and vice versa
      const Mat xs = stream_rows(x, 0, W);
      Mat want(W, 16);
      for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t j = 1 - i;
        const Mat o = oracle::retention_head(oracle::naive_matmul(xs.cols_slice(3 * i, 3 * i + 3), wq[i]),
                                             oracle::naive_matmul(xs.cols_slice(3 * j, 3 * j + 3), wk[j]),
                                             oracle::naive_matmul(xs.cols_slice(3 * i, 3 * i + 3), wv[i]), cfg.gamma,
                                             cfg.rotary_base);
        for (std::size_t r = 0; r < W; ++r)
          for (std::size_t c = 0; c < 8; ++c) want(r, i * 8 + c) = o(r, c);
      }
      oracle::group_norm(want, 2, cfg.gn_eps);
      CHECK(max_abs_diff(stream_rows(par, 0, W), want) < 1e-9);
    }
  }
}

TEST_CASE("cross retention routes agree") {
  Rng rng(7);
  for (std::size_t W : {8u, 16u, 64u})
    for (std::size_t M : {2u, 3u}) {
      nn::ParamStore store;
      CrConfig cfg;
      cfg.modalities = M;
      cfg.slab_in = 2;
      cfg.qk_dim = 2;
      cfg.value_dim = 4;
      const auto cr = CrossRetention::create(store, "cr", cfg, rng);
      const Mat x = random_mat(4 * W, cfg.in_dim(), rng);
      const Mat loop = cr.parallel(x, W);
      CHECK(max_abs_diff(loop, cr.parallel_batched(x, W)) <= 1e-10);
      auto st = cr.initial_state(4);
      for (const Mat& s : st.s) CHECK(oracle::frob(s) == 0.0);
      CHECK(max_abs_diff(loop, oracle::stacked_steps(cr, st, x, 4, W)) < 1e-8);
    }
}

TEST_CASE("cross retention state shape is step invariant") {
  Rng rng(8);
  nn::ParamStore store;
  CrConfig cfg;
  cfg.modalities = 3;
  cfg.slab_in = 2;
  cfg.qk_dim = 4;
  cfg.value_dim = 4;
  CHECK(cfg.out_dim() == 12);
  const auto cr = CrossRetention::create(store, "cr", cfg, rng);
  auto st = cr.initial_state(2);
  for (int t = 0; t < 20; ++t) {
    cr.step(random_mat(2, 6, rng), st);
    for (const Mat& s : st.s) {
      CHECK(s.rows() == 4);
      CHECK(s.cols() == 4);
    }
  }
  CHECK(st.step == 20);
  CrConfig one = cfg;
  one.modalities = 1;
  CHECK_THROWS_AS(CrossRetention::create(store, "one", one, rng), Error);
  CHECK_THROWS_AS(cr.parallel(Mat(4, 5), 4), Error);
}
