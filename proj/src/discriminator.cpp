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

#include "wsnad/discriminator.hpp"

#include <algorithm>
#include <cmath>

namespace wsnad {

void DiscriminatorConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::config, "discriminator: " + what); };
  if (layers == 0) bad("at least one propagation round required");
  if (k == 0) bad("K must be at least 1");
  if (lambda_ins < 0.0 || lambda_ins > 1.0 || lambda_dis < 0.0 || lambda_dis > 1.0) bad("lambdas must be in [0,1]");
  if (!(tau > 0.0)) bad("temperature must be positive");
  if (buffer_capacity == 0) bad("buffer capacity must be positive");
  if (query_max == 0) bad("query_max must be positive");
  if (omega < 0.0 || omega > 1.0) bad("omega must be in [0,1]");
}

// ---------------------------------------------------------------------------

AnomalyBuffer::AnomalyBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) fail(ErrorKind::config, "buffer capacity must be at least 1");
}

void AnomalyBuffer::push(std::vector<double> v) {
  entries_.push_back(std::move(v));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<std::vector<double>> AnomalyBuffer::take(std::size_t count) const {
  if (count > entries_.size())
    fail(ErrorKind::shortage, "buffer holds " + std::to_string(entries_.size()) + " entries, " +
                                  std::to_string(count) + " requested");
  return {entries_.end() - static_cast<long>(count), entries_.end()};
}

// ---------------------------------------------------------------------------

EpisodeBatch sample_episode(const Mat& features, const std::vector<int>& labels, AnomalyBuffer& buffer,
                            std::size_t k, std::size_t query_max, Rng& rng) {
  if (k == 0) fail(ErrorKind::contract, "episode needs K >= 1");
  if (labels.size() != features.rows())
    fail(ErrorKind::shape, "episode: " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(features.rows()) + " rows");
  std::vector<std::size_t> normals, anomalies, unlabeled;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] == 0) normals.push_back(r);
    else if (labels[r] == 1) anomalies.push_back(r);
    else unlabeled.push_back(r);
  }
  if (normals.size() < k)
    fail(ErrorKind::shortage, "episode needs " + std::to_string(k) + " labelled normals, batch has " +
                                  std::to_string(normals.size()));
  const std::size_t from_batch = std::min(k, anomalies.size());
  const std::size_t shortfall = k - from_batch;
  if (buffer.size() < shortfall)
    fail(ErrorKind::shortage, "episode needs " + std::to_string(shortfall) + " buffered anomalies, buffer holds " +
                                  std::to_string(buffer.size()));
  rng.shuffle(normals);
  rng.shuffle(anomalies);

  EpisodeBatch ep;
  ep.k = k;
  for (std::size_t i = 0; i < k; ++i) ep.members.push_back({false, normals[i], 0});
  for (std::size_t i = 0; i < from_batch; ++i) ep.members.push_back({false, anomalies[i], 1});
  const auto buffered = buffer.take(shortfall);
  ep.buffer_rows = Mat(shortfall, features.cols());
  for (std::size_t i = 0; i < shortfall; ++i) {
    if (buffered[i].size() != features.cols()) fail(ErrorKind::shape, "buffered vector width mismatch");
    std::copy(buffered[i].begin(), buffered[i].end(), ep.buffer_rows.data() + i * features.cols());
    ep.members.push_back({true, i, 1});
  }

  std::vector<std::size_t> labeled_q(normals.begin() + static_cast<long>(k), normals.end());
  labeled_q.insert(labeled_q.end(), anomalies.begin() + static_cast<long>(from_batch), anomalies.end());
  if (labeled_q.size() > query_max) {
    rng.shuffle(labeled_q);
    labeled_q.resize(query_max);
  }
  std::sort(labeled_q.begin(), labeled_q.end());
  const std::size_t room = query_max - labeled_q.size();
  if (unlabeled.size() > room) {
    rng.shuffle(unlabeled);
    unlabeled.resize(room);
    std::sort(unlabeled.begin(), unlabeled.end());
  }
  for (std::size_t r : labeled_q) ep.members.push_back({false, r, labels[r]});
  for (std::size_t r : unlabeled) ep.members.push_back({false, r, -1});
  ep.labeled_queries = labeled_q.size();
  ep.unlabeled_queries = unlabeled.size();

  for (std::size_t r = 0; r < labels.size(); ++r)
    if (labels[r] == 1) buffer.push(std::vector<double>(features.row(r).begin(), features.row(r).end()));
  return ep;
}

EpisodeBatch fixed_support_episode(const Mat& support_features, std::size_t k, std::size_t begin, std::size_t end) {
  if (support_features.rows() != 2 * k)
    fail(ErrorKind::shape, "support set has " + std::to_string(support_features.rows()) + " rows, expected " +
                               std::to_string(2 * k));
  EpisodeBatch ep;
  ep.k = k;
  ep.buffer_rows = support_features;
  for (std::size_t i = 0; i < 2 * k; ++i) ep.members.push_back({true, i, i < k ? 0 : 1});
  for (std::size_t r = begin; r < end; ++r) ep.members.push_back({false, r, -1});
  ep.unlabeled_queries = end - begin;
  return ep;
}

ad::Var gather_members(ad::Tape& tape, const ad::Var& features, const EpisodeBatch& ep) {
  std::vector<std::size_t> idx;
  idx.reserve(ep.size());
  for (const auto& m : ep.members) idx.push_back(m.from_buffer ? features.rows() + m.row : m.row);
  if (ep.buffer_rows.rows() == 0) return ad::gather_rows(features, idx);
  const ad::Var parts[2] = {features, tape.constant(ep.buffer_rows)};
  return ad::gather_rows(ad::concat_rows(parts), idx);
}

// ---------------------------------------------------------------------------

Discriminator::Discriminator(const DiscriminatorConfig& cfg, std::size_t feature_dim, std::uint64_t seed)
    : cfg_(cfg), feature_dim_(feature_dim) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t w = feature_dim + kClasses, s = 2 * cfg_.k;
  for (std::size_t l = 0; l <= cfg_.layers; ++l) {
    const std::string p = "round" + std::to_string(l);
    Round r;
    r.ins_edge = nn::Mlp::create(store_, p + ".ins_edge", w, 1, nn::OutputActivation::sigmoid, rng);
    r.dis_edge = nn::Mlp::create(store_, p + ".dis_edge", s, 1, nn::OutputActivation::sigmoid, rng);
    if (l > 0) {
      r.ins_to_dis = nn::Mlp::create(store_, p + ".ins_to_dis", 2 * s, s, nn::OutputActivation::identity, rng);
      r.dis_to_ins = nn::Mlp::create(store_, p + ".dis_to_ins", 2 * w, w, nn::OutputActivation::identity, rng);
    }
    rounds_.push_back(r);
  }
  head_ = nn::Linear::create(store_, "head", w, kClasses, rng);
}

namespace {

ad::Var edge_matrix(ad::Tape& tape, const nn::Mlp& mlp, const ad::Var& nodes) {
  const std::size_t n = nodes.rows();
  return ad::reshape(mlp(tape, ad::pair_sqdiff(nodes)), n, n);
}

Mat support_labels(std::size_t k) {
  Mat y(2 * k, kClasses);
  for (std::size_t i = 0; i < 2 * k; ++i) y(i, i < k ? 0 : 1) = 1.0;
  return y;
}

}  // namespace

DualGraphState Discriminator::init_graphs(ad::Tape& tape, const ad::Var& x, const EpisodeBatch& ep) const {
  const std::size_t n = ep.size(), s = ep.support();
  if (ep.k != cfg_.k) fail(ErrorKind::config, "episode K differs from discriminator K");
  if (x.rows() != n || x.cols() != feature_dim_)
    fail(ErrorKind::shape, "member features " + x.value().shape_str() + ", expected " + std::to_string(n) + "x" +
                               std::to_string(feature_dim_));
  if (ep.queries() == 0) fail(ErrorKind::contract, "episode has no query members");
  Mat y(n, kClasses);
  for (std::size_t i = 0; i < s; ++i) y(i, static_cast<std::size_t>(ep.members[i].label)) = 1.0;
  Mat vd(n, s, 1.0 / static_cast<double>(s));
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) vd(i, j) = ep.members[i].label == ep.members[j].label ? 1.0 : 0.0;

  DualGraphState g;
  g.support = s;
  g.members = n;
  const ad::Var parts[2] = {x, tape.constant(std::move(y))};
  g.v_ins.push_back(ad::concat_cols(parts));
  g.e_ins.push_back(edge_matrix(tape, rounds_[0].ins_edge, g.v_ins[0]));
  g.v_dis.push_back(tape.constant(std::move(vd)));
  g.e_dis.push_back(edge_matrix(tape, rounds_[0].dis_edge, g.v_dis[0]));
  return g;
}

void Discriminator::propagate_layer(ad::Tape& tape, DualGraphState& g, std::size_t l) const {
  if (l == 0 || l > cfg_.layers) fail(ErrorKind::config, "propagation round " + std::to_string(l) + " out of range");
  if (g.v_ins.size() != l) fail(ErrorKind::contract, "propagation rounds must run in order");
  const Round& r = rounds_[l];
  const std::size_t n = g.members;
  ad::Var e_ins = ad::mul(edge_matrix(tape, r.ins_edge, g.v_ins[l - 1]), g.e_ins[l - 1]);
  const ad::Var dis_in[2] = {g.v_dis[l - 1], ad::slice_cols(e_ins, 0, g.support)};
  ad::Var v_dis = r.ins_to_dis(tape, ad::concat_cols(dis_in));
  ad::Var e_dis = ad::mul(edge_matrix(tape, r.dis_edge, g.v_dis[l - 1]), g.e_dis[l - 1]);
  Mat off_diag(n, n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off_diag(i, i) = 0.0;
  ad::Var agg = ad::matmul(ad::mul_const(e_dis, off_diag), g.v_ins[l - 1]);
  const ad::Var ins_in[2] = {g.v_ins[l - 1], agg};
  ad::Var v_ins = r.dis_to_ins(tape, ad::concat_cols(ins_in));
  g.e_ins.push_back(e_ins);
  g.v_dis.push_back(v_dis);
  g.e_dis.push_back(e_dis);
  g.v_ins.push_back(v_ins);
}

void Discriminator::predict_labels(ad::Tape& tape, DualGraphState& g, std::size_t l) const {
  if (l == 0 || l >= g.v_ins.size()) fail(ErrorKind::contract, "round " + std::to_string(l) + " not propagated");
  const std::size_t s = g.support, n = g.members;
  if (s == 0) fail(ErrorKind::contract, "empty support set");
  const ad::Var ys = tape.constant(support_labels(s / 2));
  auto query_support = [&](const ad::Var& e) { return ad::slice_cols(ad::slice_rows(e, s, n), 0, s); };

  ad::Var agg_ins = ad::matmul(query_support(g.e_ins[l]), ys);
  ad::Var mapped = head_(tape, ad::slice_rows(g.v_ins[l], s, n));
  ad::Var logits_ins = ad::add(ad::scale(agg_ins, cfg_.lambda_ins), ad::scale(mapped, 1.0 - cfg_.lambda_ins));

  ad::Var agg_dis = ad::matmul(query_support(g.e_dis[l]), ys);
  ad::Var mass = ad::matmul(ad::slice_rows(g.v_dis[l], s, n), ys);
  ad::Var logits_dis = ad::add(ad::scale(agg_dis, cfg_.lambda_dis), ad::scale(mass, 1.0 - cfg_.lambda_dis));

  g.log_pred_ins.push_back(ad::log_softmax_rows(logits_ins));
  g.log_pred_dis.push_back(ad::log_softmax_rows(logits_dis));
}

DualGraphState Discriminator::run(ad::Tape& tape, const ad::Var& x, const EpisodeBatch& ep) const {
  DualGraphState g = init_graphs(tape, x, ep);
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    propagate_layer(tape, g, l);
    predict_labels(tape, g, l);
  }
  return g;
}

// ---------------------------------------------------------------------------

LayerLosses classification_losses(ad::Tape& tape, const DualGraphState& g, const EpisodeBatch& ep) {
  (void)tape;
  if (ep.labeled_queries == 0) fail(ErrorKind::contract, "loss needs labelled query members");
  const std::size_t q = ep.queries();
  Mat onehot(q, kClasses);
  for (std::size_t i = 0; i < ep.labeled_queries; ++i)
    onehot(i, static_cast<std::size_t>(ep.members[ep.support() + i].label)) = 1.0;
  LayerLosses out;
  for (std::size_t l = 0; l < g.log_pred_ins.size(); ++l) {
    out.ins.push_back(ad::scale(ad::sum(ad::mul_const(g.log_pred_ins[l], onehot)), -1.0));
    out.dis.push_back(ad::scale(ad::sum(ad::mul_const(g.log_pred_dis[l], onehot)), -1.0));
  }
  return out;
}

namespace {

// log Σ exp(x) over a row vector, shifted by its (constant) maximum.
ad::Var log_sum_exp(const ad::Var& x) {
  const auto& v = x.value().storage();
  const double c = *std::max_element(v.begin(), v.end());
  return ad::add_scalar(ad::log(ad::sum(ad::exp(ad::add_scalar(x, -c)))), c);
}

}  // namespace

ad::Var contrastive_loss_disc(ad::Tape& tape, const ad::Var& anchor, const ad::Var& positives,
                              const ad::Var& negatives, double tau) {
  (void)tape;
  if (!(tau > 0.0)) fail(ErrorKind::config, "temperature must be positive");
  if (positives.rows() == 0 || negatives.rows() == 0)
    fail(ErrorKind::contract, "contrastive loss needs positives and negatives");
  ad::Var pos = ad::scale(ad::matmul_nt(anchor, positives), 1.0 / tau);
  ad::Var neg = ad::scale(ad::matmul_nt(anchor, negatives), 1.0 / tau);
  return ad::sub(log_sum_exp(neg), log_sum_exp(pos));
}

double contrastive_loss_disc(const Mat& anchor, const Mat& positives, const Mat& negatives, double tau) {
  ad::Tape tape(false);
  return contrastive_loss_disc(tape, tape.constant(anchor), tape.constant(positives), tape.constant(negatives), tau)
      .value()[0];
}

ad::Var normalize_rows(const ad::Var& x, double eps) {
  const ad::Var inv = ad::exp(ad::scale(ad::log(ad::add_scalar(ad::sum_cols(ad::square(x)), eps)), -0.5));
  return ad::mul_col(x, inv);
}

std::vector<double> layer_weights(std::size_t layers) {
  std::vector<double> w(layers);
  for (std::size_t l = 1; l <= layers; ++l) w[l - 1] = std::ldexp(1.0, -static_cast<int>(layers - l));
  return w;
}

ad::Var joint_loss(double omega, const ad::Var& cont, const LayerLosses& losses) {
  if (omega < 0.0 || omega > 1.0) fail(ErrorKind::config, "omega must be in [0,1], got " + std::to_string(omega));
  if (losses.ins.empty() || losses.ins.size() != losses.dis.size())
    fail(ErrorKind::contract, "joint loss needs per-layer losses");
  const auto w = layer_weights(losses.ins.size());
  ad::Var graph;
  for (std::size_t l = 0; l < w.size(); ++l) {
    ad::Var term = ad::scale(ad::add(losses.dis[l], losses.ins[l]), w[l]);
    graph = graph.valid() ? ad::add(graph, term) : term;
  }
  ad::Var total = ad::scale(graph, 1.0 - omega);
  if (cont.valid()) total = ad::add(total, ad::scale(cont, omega));
  return total;
}

NodeDecision decide(double p_ins_anomalous, double p_dis_anomalous) {
  NodeDecision d;
  d.score = 0.5 * (p_ins_anomalous + p_dis_anomalous);
  d.label = d.score >= 0.5 ? 1 : 0;
  return d;
}

std::vector<NodeDecision> classify_nodes(const DualGraphState& g) {
  if (g.log_pred_ins.empty()) fail(ErrorKind::contract, "no predictions; run propagation first");
  const Mat& li = g.log_pred_ins.back().value();
  const Mat& ld = g.log_pred_dis.back().value();
  std::vector<NodeDecision> out;
  for (std::size_t r = 0; r < li.rows(); ++r) out.push_back(decide(std::exp(li(r, 1)), std::exp(ld(r, 1))));
  return out;
}

}  // namespace wsnad
