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

#include "wsnad/flops.hpp"

namespace wsnad {

void FlopsLedger::add(const std::string& module, const std::string& operation, std::uint64_t flops) {
  entries.push_back({module, operation, flops});
}

std::uint64_t FlopsLedger::total() const {
  std::uint64_t t = 0;
  for (const auto& e : entries) t += e.flops;
  return t;
}

std::map<std::string, std::uint64_t> FlopsLedger::by_module() const {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : entries) out[e.module] += e.flops;
  return out;
}

std::uint64_t FlopsLedger::operation_total(const std::string& operation) const {
  std::uint64_t t = 0;
  for (const auto& e : entries)
    if (e.operation == operation) t += e.flops;
  return t;
}

namespace {

constexpr std::uint64_t kNormPerElement = 5;  // mean, centre, square-sum, scale, divide
constexpr std::uint64_t kRotaryPerElement = 3;

}  // namespace

FlopsLedger count_flops(const BackboneConfig& cfg, FlopsMode mode, std::size_t nodes, long position) {
  cfg.validate();
  (void)position;  // neither mode depends on where in the stream we are
  FlopsLedger led;
  const std::uint64_t N = nodes, d = cfg.d_model, M = cfg.modalities, h = cfg.heads;
  const std::uint64_t slab = d / M, mqk = cfg.msr_qk_dim, mv = d / h, cqk = cfg.cr_qk_dim;
  const bool par = mode == FlopsMode::parallel;
  const std::uint64_t W = cfg.window;
  const std::uint64_t R = par ? N * W : N;  // rows processed

  led.add("embed", "projection", matmul_flops(R, 1, d));
  led.add("embed", "bias", R * d);

  // One retention head over `streams` streams: qk and v widths.
  auto retention = [&](const std::string& mod, std::uint64_t streams, std::uint64_t qk, std::uint64_t v) {
    if (par) {
      led.add(mod, "scores", streams * matmul_flops(W, qk, W));
      led.add(mod, "decay_mask", streams * W * W);
      led.add(mod, "weighted_values", streams * matmul_flops(W, W, v));
    } else {
      led.add(mod, "state_decay", streams * qk * v);
      led.add(mod, "state_update", streams * matmul_flops(qk, 1, v) + streams * qk * v);
      led.add(mod, "readout", streams * matmul_flops(1, qk, v));
    }
  };

  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string msr = "layer" + std::to_string(l) + ".msr";
    const std::string cr = "layer" + std::to_string(l) + ".cr";
    const std::string nrm = "layer" + std::to_string(l) + ".norm";

    led.add(nrm, "layer_norm", 2 * (kNormPerElement + 2) * R * d);

    led.add(msr, "projection", matmul_flops(R, d, 2 * h * mqk) + matmul_flops(R, d, h * mv));
    led.add(msr, "rotary", kRotaryPerElement * R * 2 * h * mqk);
    for (std::uint64_t i = 0; i < h; ++i) retention(msr, N, mqk, mv);
    led.add(msr, "group_norm", kNormPerElement * R * d);
    led.add(msr, "residual", R * d);

    led.add(cr, "projection", M * (matmul_flops(R, slab, 2 * cqk) + matmul_flops(R, slab, slab)));
    led.add(cr, "key_sum", 2 * M * R * cqk);
    led.add(cr, "rotary", kRotaryPerElement * R * 2 * M * cqk);
    for (std::uint64_t m = 0; m < M; ++m) retention(cr, N, cqk, slab);
    led.add(cr, "group_norm", kNormPerElement * R * d);
    led.add(cr, "residual", R * d);
  }

  if (par) {
    const std::uint64_t L = cfg.layers, o = cfg.gat_out;
    led.add("fpn", "first", matmul_flops(R, d * L, d) + 2 * R * d);
    led.add("fpn", "window_mean", R * d);
    led.add("fpn", "second", matmul_flops(N, d, d) + 2 * N * d);
    led.add("gat", "projection", matmul_flops(N, d, o));
    led.add("gat", "scores", 2 * matmul_flops(N, o, 1) + 2 * N * N);
    led.add("gat", "softmax", 4 * N * N);
    led.add("gat", "aggregate", matmul_flops(N, N, o) + N * o);
  }
  return led;
}

}  // namespace wsnad
