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

#include "wsnad/backbone.hpp"

#include "wsnad/tensor_ops.hpp"

namespace wsnad {

void BackboneConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::config, "backbone: " + what); };
  if (layers == 0) bad("layer count must be at least 1");
  if (heads == 0) bad("head count must be positive");
  if (d_model == 0 || window == 0 || gat_out == 0) bad("widths and window must be positive");
  if (modalities < 2) bad("cross retention needs at least 2 modalities");
  if (d_model % heads != 0)
    bad("model width " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) + " heads");
  if (d_model % modalities != 0)
    bad("model width " + std::to_string(d_model) + " not divisible by " + std::to_string(modalities) +
        " modalities");
  if (msr_qk_dim == 0 || msr_qk_dim % 2 != 0) bad("retention query/key width must be even");
  if (cr_qk_dim == 0 || cr_qk_dim % 2 != 0) bad("cross retention query/key width must be even");
}

ad::Var fpn_fuse(ad::Tape& tape, std::span<const ad::Var> layer_outputs, std::size_t window, const FpnParams& p) {
  if (layer_outputs.empty()) fail(ErrorKind::shape, "fpn_fuse: no layer outputs");
  for (const auto& o : layer_outputs)
    if (!o.value().same_shape(layer_outputs[0].value()))
      fail(ErrorKind::shape, "fpn_fuse: layer output " + o.value().shape_str() + " vs " +
                                 layer_outputs[0].value().shape_str());
  const std::size_t stacked = layer_outputs.size() * layer_outputs[0].cols();
  if (p.first.in() != stacked)
    fail(ErrorKind::shape, "fpn_fuse: stacked width " + std::to_string(stacked) + ", weights expect " +
                               std::to_string(p.first.in()));
  ad::Var x = layer_outputs.size() == 1 ? layer_outputs[0] : ad::concat_cols(layer_outputs);
  ad::Var y = ad::relu(p.first(tape, x));
  y = ad::mean_blocks(y, window);
  return ad::relu(p.second(tape, y));
}

ad::Var gat_forward(ad::Tape& tape, const ad::Var& x, const Mat& adjacency, const GatParams& p, Mat* attention) {
  const std::size_t n = x.rows();
  require_shape(adjacency, n, n, "adjacency");
  for (std::size_t i = 0; i < n; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) any = any || adjacency(i, j) != 0.0;
    if (!any) fail(ErrorKind::contract, "adjacency row " + std::to_string(i) + " is empty (self-loop required)");
  }
  ad::Var z = p.proj(tape, x);
  ad::Var src = ad::matmul(z, tape.param(*p.attn_src));
  ad::Var dst = ad::matmul(z, tape.param(*p.attn_dst));
  ad::Var scores = ad::leaky_relu(ad::outer_add(src, dst), p.slope);
  ad::Var alpha = ad::masked_softmax_rows(scores, adjacency);
  if (attention != nullptr) *attention = alpha.value();
  return ad::elu(ad::matmul(alpha, z));
}

Backbone::Backbone(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t d = cfg_.d_model, M = cfg_.modalities, slab = d / M;
  for (std::size_t m = 0; m < M; ++m)
    embed_weight_.push_back(
        &store_.create("embed.m" + std::to_string(m) + ".weight", nn::xavier_uniform(1, slab, rng)));
  embed_bias_ = &store_.create("embed.bias", Mat(1, d));
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    MsrConfig mc;
    mc.d_in = d;
    mc.heads = cfg_.heads;
    mc.qk_dim = cfg_.msr_qk_dim;
    mc.value_dim = d / cfg_.heads;
    mc.rotary_base = cfg_.rotary_base;
    mc.gn_eps = cfg_.gn_eps;
    CrConfig cc;
    cc.modalities = M;
    cc.slab_in = slab;
    cc.qk_dim = cfg_.cr_qk_dim;
    cc.value_dim = slab;
    cc.rotary_base = cfg_.rotary_base;
    cc.gn_eps = cfg_.gn_eps;
    Layer layer{nn::LayerNorm::create(store_, p + ".norm_msr", d, cfg_.ln_eps),
                MultiScaleRetention::create(store_, p + ".msr", mc, rng),
                nn::LayerNorm::create(store_, p + ".norm_cr", d, cfg_.ln_eps),
                CrossRetention::create(store_, p + ".cr", cc, rng)};
    layers_.push_back(std::move(layer));
  }
  fpn_.first = nn::Linear::create(store_, "fpn.first", d * cfg_.layers, d, rng);
  fpn_.second = nn::Linear::create(store_, "fpn.second", d, d, rng);
  gat_.proj = nn::Linear::create(store_, "gat.proj", d, cfg_.gat_out, rng, false);
  gat_.attn_src = &store_.create("gat.attn_src", nn::xavier_uniform(cfg_.gat_out, 1, rng));
  gat_.attn_dst = &store_.create("gat.attn_dst", nn::xavier_uniform(cfg_.gat_out, 1, rng));
  gat_.slope = cfg_.gat_slope;
}

std::vector<ad::Var> Backbone::layer_outputs(ad::Tape& tape, const ad::Var& features) const {
  const std::size_t W = cfg_.window;
  if (features.cols() != cfg_.modalities)
    fail(ErrorKind::shape, "backbone input has " + std::to_string(features.cols()) + " modality columns, expected " +
                               std::to_string(cfg_.modalities));
  if (features.rows() == 0 || features.rows() % W != 0)
    fail(ErrorKind::shape, "backbone input rows " + std::to_string(features.rows()) + " not a multiple of window " +
                               std::to_string(W));
  std::vector<ad::Var> rows;
  for (auto* p : embed_weight_) rows.push_back(tape.param(*p));
  ad::Var h = ad::add_row(ad::matmul(features, ad::block_diag(rows)), tape.param(*embed_bias_));
  std::vector<ad::Var> outs;
  for (const Layer& layer : layers_) {
    h = ad::add(h, layer.msr.forward(tape, layer.norm_msr(tape, h), W));
    h = ad::add(h, layer.cr.forward(tape, layer.norm_cr(tape, h), W));
    outs.push_back(h);
  }
  return outs;
}

ad::Var Backbone::forward(ad::Tape& tape, const ad::Var& features, const Mat& adjacency) const {
  const std::vector<ad::Var> outs = layer_outputs(tape, features);
  ad::Var fused = fpn_fuse(tape, outs, cfg_.window, fpn_);
  return gat_forward(tape, fused, adjacency, gat_);
}

ad::Var Backbone::forward(ad::Tape& tape, const Mat& features, const Mat& adjacency) const {
  return forward(tape, tape.constant(features), adjacency);
}

Mat Backbone::embed(const Mat& features, const Mat& adjacency) const {
  ad::Tape tape(false);
  return forward(tape, features, adjacency).value();
}

StreamHandle Backbone::stream(const Mat& adjacency) const { return StreamHandle(*this, adjacency); }

// ---------------------------------------------------------------------------

StreamHandle::StreamHandle(const Backbone& model, const Mat& adjacency)
    : model_(&model), adjacency_(adjacency), nodes_(adjacency.rows()) {
  require_shape(adjacency, nodes_, nodes_, "stream adjacency");
  const auto& c = cfg();
  for (const auto& layer : model.layers_) {
    msr_.push_back(layer.msr.initial_state(nodes_));
    cr_.push_back(layer.cr.initial_state(nodes_));
  }
  rings_.assign(c.layers, std::vector<Mat>(c.window, Mat(nodes_, c.d_model)));
  latest_.assign(c.layers, Mat(nodes_, c.d_model));
}

namespace {

Mat layer_norm_plain(const Mat& x, const nn::LayerNorm& ln) {
  Mat y = x;
  group_norm_rows(y, 1, ln.eps);
  const Mat& g = ln.gain->value;
  const Mat& b = ln.bias->value;
  for (std::size_t r = 0; r < y.rows(); ++r)
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) = y(r, c) * g[c] + b[c];
  return y;
}

}  // namespace

void StreamHandle::push(const Mat& x_t) {
  const auto& c = cfg();
  require_shape(x_t, nodes_, c.modalities, "stream step input");
  const std::size_t slab = c.d_model / c.modalities;
  Mat h(nodes_, c.d_model);
  for (std::size_t n = 0; n < nodes_; ++n)
    for (std::size_t m = 0; m < c.modalities; ++m)
      for (std::size_t j = 0; j < slab; ++j)
        h(n, m * slab + j) = x_t(n, m) * model_->embed_weight_[m]->value[j] + model_->embed_bias_->value[m * slab + j];
  const std::size_t slot = static_cast<std::size_t>(steps_) % c.window;
  for (std::size_t l = 0; l < c.layers; ++l) {
    const auto& layer = model_->layers_[l];
    h += layer.msr.step(layer_norm_plain(h, layer.norm_msr), msr_[l]);
    h += layer.cr.step(layer_norm_plain(h, layer.norm_cr), cr_[l]);
    rings_[l][slot] = h;
    latest_[l] = h;
  }
  ++steps_;
}

const Mat& StreamHandle::last_layer_output(std::size_t layer) const {
  if (layer >= latest_.size()) fail(ErrorKind::contract, "layer index out of range");
  return latest_[layer];
}

Mat StreamHandle::embedding() const {
  const auto& c = cfg();
  if (!warm())
    fail(ErrorKind::state, "stream not warm: " + std::to_string(static_cast<long>(c.window) - steps_) +
                               " more steps required");
  ad::Tape tape(false);
  std::vector<ad::Var> outs;
  for (std::size_t l = 0; l < c.layers; ++l) {
    Mat stacked(nodes_ * c.window, c.d_model);
    for (std::size_t t = 0; t < c.window; ++t) {
      const std::size_t slot = static_cast<std::size_t>(steps_ - static_cast<long>(c.window) + static_cast<long>(t)) %
                               c.window;
      const Mat& src = rings_[l][slot];
      for (std::size_t n = 0; n < nodes_; ++n)
        for (std::size_t j = 0; j < c.d_model; ++j) stacked(n * c.window + t, j) = src(n, j);
    }
    outs.push_back(tape.constant(std::move(stacked)));
  }
  ad::Var fused = fpn_fuse(tape, outs, c.window, model_->fpn_);
  return gat_forward(tape, fused, adjacency_, model_->gat_).value();
}

Mat window_to_rows(const std::vector<double>& x, std::size_t nodes, std::size_t modalities, std::size_t window) {
  if (x.size() != nodes * modalities * window)
    fail(ErrorKind::shape, "window tensor has " + std::to_string(x.size()) + " values, expected " +
                               std::to_string(nodes * modalities * window));
  Mat rows(nodes * window, modalities);
  for (std::size_t n = 0; n < nodes; ++n)
    for (std::size_t m = 0; m < modalities; ++m)
      for (std::size_t t = 0; t < window; ++t) rows(n * window + t, m) = x[(n * modalities + m) * window + t];
  return rows;
}

}  // namespace wsnad
