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

#include "wsnad/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace wsnad {

std::vector<std::size_t> sample_subgraph(const Mat& adjacency, std::size_t center, std::size_t walk_len, Rng& rng) {
  const std::size_t n = adjacency.rows();
  if (center >= n) fail(ErrorKind::contract, "subgraph center " + std::to_string(center) + " out of range");
  std::vector<char> in(n, 0);
  in[center] = 1;
  for (std::size_t j = 0; j < n; ++j)
    if (adjacency(center, j) != 0.0) in[j] = 1;
  std::size_t at = center;
  for (std::size_t step = 0; step < walk_len; ++step) {
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < n; ++j)
      if (j != at && adjacency(at, j) != 0.0) next.push_back(j);
    if (next.empty()) break;
    at = next[rng.below(next.size())];
    in[at] = 1;
  }
  std::vector<std::size_t> members;
  for (std::size_t j = 0; j < n; ++j)
    if (in[j]) members.push_back(j);
  return members;
}

std::vector<double> pool_subgraph(const Mat& embeddings, const std::vector<std::size_t>& members) {
  if (members.empty()) fail(ErrorKind::contract, "subgraph sampler returned no members");
  std::vector<double> out(embeddings.cols(), 0.0);
  for (std::size_t m : members) {
    if (m >= embeddings.rows()) fail(ErrorKind::contract, "subgraph member out of range");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += embeddings(m, c);
  }
  for (double& v : out) v /= static_cast<double>(members.size());
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::shape, "pearson: length mismatch");
  if (a.size() < 2) fail(ErrorKind::shape, "pearson needs at least 2 dimensions");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  const double sa = std::sqrt(va / n), sb = std::sqrt(vb / n);
  if (sa < 1e-12 || sb < 1e-12) return 0.0;
  return (cov / n) / (sa * sb);
}

ContrastEpisode select_pairs(const std::vector<double>& anchor, const std::vector<SubgraphSample>& candidates,
                             std::size_t k_neg, double tau) {
  if (k_neg == 0) fail(ErrorKind::config, "k_neg must be at least 1");
  if (candidates.size() < k_neg + 1)
    fail(ErrorKind::contract, "episode needs " + std::to_string(k_neg + 1) + " candidates, got " +
                                  std::to_string(candidates.size()));
  ContrastEpisode ep;
  ep.anchor = anchor;
  ep.tau = tau;
  for (const auto& c : candidates) ep.correlations.push_back(pearson(anchor, c.pooled));
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto& rho = ep.correlations;
  ep.positive = *std::min_element(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (rho[a] != rho[b]) return rho[a] > rho[b];
    return candidates[a].center < candidates[b].center;
  });
  std::vector<std::size_t> rest;
  for (std::size_t i : idx)
    if (i != ep.positive) rest.push_back(i);
  std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
    if (rho[a] != rho[b]) return rho[a] < rho[b];
    return candidates[a].center < candidates[b].center;
  });
  ep.negatives.assign(rest.begin(), rest.begin() + static_cast<long>(k_neg));
  return ep;
}

double info_nce(std::span<const double> anchor, std::span<const double> positive,
                const std::vector<std::vector<double>>& negatives, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::config, "temperature must be positive");
  auto dot = [&](std::span<const double> v) {
    if (v.size() != anchor.size()) fail(ErrorKind::shape, "info_nce: width mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += anchor[i] * v[i];
    return s / tau;
  };
  std::vector<double> logits{dot(positive)};
  for (const auto& n : negatives) logits.push_back(dot(n));
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return -(logits[0] - mx - std::log(z));
}

ad::Var info_nce(ad::Tape& tape, const ad::Var& anchor, const ad::Var& positive, const ad::Var& negatives,
                 double tau) {
  (void)tape;
  if (!(tau > 0.0)) fail(ErrorKind::config, "temperature must be positive");
  const ad::Var parts[2] = {positive, negatives};
  ad::Var cands = ad::concat_rows(parts);
  ad::Var logits = ad::scale(ad::matmul_nt(anchor, cands), 1.0 / tau);
  ad::Var lp = ad::log_softmax_rows(logits);
  return ad::scale(ad::slice_cols(lp, 0, 1), -1.0);
}

ad::Var graph_contrast_loss(ad::Tape& tape, const ad::Var& embeddings, const Mat& adjacency,
                            const PretrainConfig& cfg, Rng& rng) {
  const std::size_t n = embeddings.rows();
  if (n < cfg.k_neg + 2) return {};
  const Mat& emb = embeddings.value();
  const std::size_t anchor = rng.below(n);
  std::vector<SubgraphSample> cands;
  for (std::size_t c = 0; c < n; ++c) {
    if (c == anchor) continue;
    SubgraphSample s;
    s.center = c;
    s.members = sample_subgraph(adjacency, c, cfg.walk_len, rng);
    s.pooled = pool_subgraph(emb, s.members);
    cands.push_back(std::move(s));
  }
  const std::vector<double> anchor_vec(emb.row(anchor).begin(), emb.row(anchor).end());
  const ContrastEpisode ep = select_pairs(anchor_vec, cands, cfg.k_neg, cfg.tau);
  auto pooled = [&](const SubgraphSample& s) {
    ad::Var rows = ad::gather_rows(embeddings, s.members);
    return ad::scale(ad::sum_rows(rows), 1.0 / static_cast<double>(s.members.size()));
  };
  std::vector<ad::Var> negs;
  for (std::size_t i : ep.negatives) negs.push_back(pooled(cands[i]));
  const std::size_t a_rows[1] = {anchor};
  return info_nce(tape, ad::gather_rows(embeddings, a_rows), pooled(cands[ep.positive]), ad::concat_rows(negs),
                  cfg.tau);
}

namespace {

Mat features_of(const AttributedGraphSample& s) {
  return window_to_rows(s.window.x, s.window.nodes, s.window.modalities, s.window.window);
}

}  // namespace

double pretrain_step(Backbone& backbone, std::span<const AttributedGraphSample* const> batch, nn::Adam& optimizer,
                     const PretrainConfig& cfg, std::uint64_t seed, std::size_t threads) {
  std::vector<ad::Gradients> grads(batch.size());
  std::vector<double> losses(batch.size(), std::numeric_limits<double>::quiet_NaN());
  nn::parallel_for(batch.size(), threads, [&](std::size_t g) {
    ad::Tape tape;
    Rng rng(derive_seed(seed, g));
    ad::Var emb = backbone.forward(tape, features_of(*batch[g]), batch[g]->adjacency);
    ad::Var loss = graph_contrast_loss(tape, emb, batch[g]->adjacency, cfg, rng);
    if (!loss.valid()) return;
    losses[g] = loss.value()[0];
    tape.backward(loss, &grads[g]);
  });
  ad::Gradients total;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t g = 0; g < batch.size(); ++g) {
    if (std::isnan(losses[g])) continue;
    if (!std::isfinite(losses[g])) fail(ErrorKind::divergence, "non-finite contrast loss");
    total.merge(grads[g]);
    sum += losses[g];
    ++used;
  }
  if (used == 0) return std::numeric_limits<double>::quiet_NaN();
  total.scale(1.0 / static_cast<double>(used));
  optimizer.step(backbone.params(), total);
  return sum / static_cast<double>(used);
}

double contrast_loss_eval(const Backbone& backbone, std::span<const AttributedGraphSample* const> graphs,
                          const PretrainConfig& cfg, std::uint64_t seed, std::size_t threads) {
  std::vector<double> losses(graphs.size(), std::numeric_limits<double>::quiet_NaN());
  nn::parallel_for(graphs.size(), threads, [&](std::size_t g) {
    ad::Tape tape(false);
    Rng rng(derive_seed(seed, g));
    ad::Var emb = backbone.forward(tape, features_of(*graphs[g]), graphs[g]->adjacency);
    ad::Var loss = graph_contrast_loss(tape, emb, graphs[g]->adjacency, cfg, rng);
    if (loss.valid()) losses[g] = loss.value()[0];
  });
  double sum = 0.0;
  std::size_t used = 0;
  for (double l : losses)
    if (!std::isnan(l)) {
      sum += l;
      ++used;
    }
  return used == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(used);
}

}  // namespace wsnad
