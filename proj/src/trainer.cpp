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

#include "wsnad/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "spdlog/spdlog.h"

namespace wsnad {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kBackboneInit = 0xb0;
constexpr std::uint64_t kDiscInit = 0xd0;
constexpr std::uint64_t kStage1Order = 0x51;
constexpr std::uint64_t kStage1Step = 0x52;
constexpr std::uint64_t kStage1Val = 0x53;
constexpr std::uint64_t kStage2Order = 0x61;
constexpr std::uint64_t kStage2Episode = 0x62;
constexpr std::uint64_t kSupportPick = 0x63;

Mat features_of(const AttributedGraphSample& s) {
  return window_to_rows(s.window.x, s.window.nodes, s.window.modalities, s.window.window);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create directory " + dir + ": " + ec.message());
}

void emit(std::ostream* out, const json& j) {
  if (out) *out << j.dump() << '\n' << std::flush;
}

std::vector<const AttributedGraphSample*> pointers(const std::vector<AttributedGraphSample>& v) {
  std::vector<const AttributedGraphSample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

Mat stack_rows(const std::vector<Mat>& parts, std::size_t cols) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Mat out(rows, cols);
  std::size_t at = 0;
  for (const auto& p : parts) {
    std::copy(p.storage().begin(), p.storage().end(), out.data() + at * cols);
    at += p.rows();
  }
  return out;
}

json report_json(const MetricsReport& r) {
  return {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn},
          {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

}  // namespace

std::size_t resolve_threads(const TrainConfig& t) { return t.threads > 0 ? t.threads : nn::default_threads(); }

// ---------------------------------------------------------------------------

DetectorModel::DetectorModel(const RunConfig& c)
    : cfg(c),
      backbone(c.backbone, derive_seed(c.train.seed, kBackboneInit)),
      discriminator(c.discriminator, c.backbone.gat_out, derive_seed(c.train.seed, kDiscInit)) {}

Checkpoint backbone_checkpoint(const Backbone& backbone, const RunConfig& cfg, const std::string& extra_json) {
  Checkpoint c;
  c.kind = "backbone";
  c.config = config_to_pairs(cfg);
  export_params(backbone.params(), "backbone.", c);
  c.extra = extra_json;
  return c;
}

void load_backbone(Backbone& backbone, const Checkpoint& ckpt, const RunConfig& cfg) {
  require_config_match(ckpt.config, config_to_pairs(cfg), {"backbone."});
  import_params(backbone.params(), "backbone.", ckpt);
}

Checkpoint model_checkpoint(const DetectorModel& model, const std::string& extra_json) {
  Checkpoint c;
  c.kind = "model";
  c.config = config_to_pairs(model.cfg);
  export_params(model.backbone.params(), "backbone.", c);
  export_params(model.discriminator.params(), "discriminator.", c);
  c.put("support.embeddings", model.support);
  json extra = json::parse(extra_json);
  json refs = json::array();
  for (const auto& r : model.support_refs) refs.push_back({r.sample_id, r.node, r.label});
  extra["support"] = refs;
  c.extra = extra.dump();
  return c;
}

std::unique_ptr<DetectorModel> load_model(const std::string& path, const RunConfig* requested) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "model") fail(ErrorKind::compat, path + " holds a " + ckpt.kind + " checkpoint, not a model");
  if (requested) require_config_match(ckpt.config, config_to_pairs(*requested), {"backbone.", "discriminator."});
  RunConfig cfg;
  for (const auto& [k, v] : ckpt.config) set_config_value(cfg, k, v);
  auto model = std::make_unique<DetectorModel>(cfg);
  import_params(model->backbone.params(), "backbone.", ckpt);
  import_params(model->discriminator.params(), "discriminator.", ckpt);
  const Mat* support = ckpt.find("support.embeddings");
  if (!support || support->rows() != 2 * cfg.discriminator.k || support->cols() != cfg.backbone.gat_out)
    fail(ErrorKind::compat, path + ": missing or misshapen support.embeddings");
  model->support = *support;
  const json extra = json::parse(ckpt.extra);
  if (extra.contains("support"))
    for (const auto& r : extra["support"])
      model->support_refs.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>(), r.at(2).get<int>()});
  return model;
}

// ---------------------------------------------------------------------------

Stage1Result run_stage1(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                        const std::string& out_dir, std::ostream* metrics) {
  cfg.validate();
  if (ds.split.train.empty()) fail(ErrorKind::data, "stage 1 needs a non-empty training split");
  if (ds.modalities != cfg.backbone.modalities || ds.window != cfg.backbone.window)
    fail(ErrorKind::config, "dataset shape (M=" + std::to_string(ds.modalities) + ", W=" + std::to_string(ds.window) +
                                ") does not match the backbone config");
  ensure_dir(out_dir);
  const std::size_t threads = resolve_threads(cfg.train);
  const std::uint64_t seed = cfg.train.seed;
  Backbone backbone(cfg.backbone, derive_seed(seed, kBackboneInit));
  nn::Adam adam(cfg.train.adam());

  const auto train = pointers(ds.split.train);
  const auto val = pointers(ds.split.validation.empty() ? ds.split.train : ds.split.validation);

  emit(metrics, {{"stage", 1},
                 {"epochs", cfg.train.stage1_epochs},
                 {"batch_size", cfg.train.batch_size},
                 {"lr", cfg.train.learning_rate},
                 {"seed", seed},
                 {"dataset", dataset_hash}});

  Stage1Result res;
  res.best_path = join_path(out_dir, "backbone_best.json");
  res.last_path = join_path(out_dir, "backbone_last.json");
  res.best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  for (std::size_t epoch = 0; epoch < cfg.train.stage1_epochs; ++epoch) {
    std::vector<const AttributedGraphSample*> order = train;
    Rng order_rng(derive_seed(seed, kStage1Order, epoch));
    order_rng.shuffle(order);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t b = 0, step = 0; b < order.size(); b += cfg.train.batch_size, ++step) {
      const std::size_t e = std::min(order.size(), b + cfg.train.batch_size);
      std::span<const AttributedGraphSample* const> batch(order.data() + b, e - b);
      double loss;
      try {
        loss = pretrain_step(backbone, batch, adam, cfg.pretrain, derive_seed(seed, kStage1Step, epoch, step),
                             threads);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::divergence) throw;
        fail(ErrorKind::divergence, "stage 1 epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                        ": " + err.what());
      }
      if (std::isnan(loss)) continue;
      sum += loss;
      ++used;
    }
    const double mean = used ? sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
    const double val_loss = contrast_loss_eval(backbone, val, cfg.pretrain, derive_seed(seed, kStage1Val), threads);
    if (!std::isfinite(val_loss))
      fail(ErrorKind::divergence, "stage 1 epoch " + std::to_string(epoch) + ": validation loss is not finite");
    emit(metrics, {{"epoch", epoch}, {"mean_loss", mean}, {"lr", cfg.train.learning_rate}, {"seed", seed},
                   {"val_loss", val_loss}});
    spdlog::debug("stage1 epoch {} loss {:.5f} val {:.5f}", epoch, mean, val_loss);
    res.epochs_run = epoch + 1;
    res.last_val_loss = val_loss;
    const json extra = {{"stage", 1}, {"epoch", epoch}, {"val_loss", val_loss}, {"dataset", dataset_hash}};
    if (val_loss < res.best_val_loss) {
      res.best_val_loss = val_loss;
      res.best_epoch = epoch;
      since_best = 0;
      save_checkpoint(res.best_path, backbone_checkpoint(backbone, cfg, extra.dump()));
    } else if (cfg.train.patience > 0 && ++since_best >= cfg.train.patience) {
      save_checkpoint(res.last_path, backbone_checkpoint(backbone, cfg, extra.dump()));
      break;
    }
    if (epoch + 1 == cfg.train.stage1_epochs)
      save_checkpoint(res.last_path, backbone_checkpoint(backbone, cfg, extra.dump()));
  }
  if (res.epochs_run == 0) save_checkpoint(res.best_path, backbone_checkpoint(backbone, cfg, "{}"));
  if (res.epochs_run == 0) save_checkpoint(res.last_path, backbone_checkpoint(backbone, cfg, "{}"));
  return res;
}

// ---------------------------------------------------------------------------

std::vector<Mat> embed_samples(const Backbone& backbone, std::span<const AttributedGraphSample> samples,
                               std::size_t threads) {
  std::vector<Mat> out(samples.size());
  nn::parallel_for(samples.size(), threads,
                   [&](std::size_t i) { out[i] = backbone.embed(features_of(samples[i]), samples[i].adjacency); });
  return out;
}

std::vector<NodeDecision> classify_embeddings(const Discriminator& disc, const Mat& support, const Mat& embeddings,
                                              std::size_t threads) {
  const std::size_t q = disc.config().query_max, n = embeddings.rows();
  const std::size_t chunks = (n + q - 1) / q;
  std::vector<std::vector<NodeDecision>> parts(chunks);
  nn::parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t b = c * q, e = std::min(n, b + q);
    const EpisodeBatch ep = fixed_support_episode(support, disc.config().k, b, e);
    ad::Tape tape(false);
    const ad::Var x = gather_members(tape, tape.constant(embeddings), ep);
    parts[c] = classify_nodes(disc.run(tape, x, ep));
  });
  std::vector<NodeDecision> out;
  out.reserve(n);
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

namespace {

std::vector<Detection> detections_from(const Discriminator& disc, const Mat& support,
                                       std::span<const AttributedGraphSample> samples, const std::vector<Mat>& emb,
                                       std::size_t threads) {
  if (samples.empty()) return {};
  const Mat all = stack_rows(emb, emb.front().cols());
  const auto decisions = classify_embeddings(disc, support, all, threads);
  std::vector<Detection> out;
  std::size_t at = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t node = 0; node < emb[i].rows(); ++node, ++at) {
      const auto& s = samples[i];
      out.push_back({s.id, node, decisions[at].score, decisions[at].label, node < s.truth.size() ? s.truth[node] : 0});
    }
  return out;
}

Mat support_matrix(const std::vector<SupportRef>& refs, const std::vector<Mat>& train_emb,
                   const std::vector<std::size_t>& train_index_of_ref) {
  Mat out(refs.size(), train_emb.front().cols());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto row = train_emb[train_index_of_ref[i]].row(refs[i].node);
    std::copy(row.begin(), row.end(), out.data() + i * out.cols());
  }
  return out;
}

}  // namespace

std::vector<Detection> detect_samples(const DetectorModel& model, std::span<const AttributedGraphSample> samples,
                                      std::size_t threads) {
  return detections_from(model.discriminator, model.support, samples,
                         embed_samples(model.backbone, samples, threads), threads);
}

MetricsReport score_detections(const std::vector<Detection>& detections) {
  std::vector<int> pred, truth;
  for (const auto& d : detections) {
    pred.push_back(d.label);
    truth.push_back(d.truth);
  }
  return evaluate(pred, truth);
}

Stage2Result run_stage2(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                        const std::string& backbone_path, const std::string& out_dir, std::ostream* metrics) {
  cfg.validate();
  if (ds.split.train.empty()) fail(ErrorKind::data, "stage 2 needs a non-empty training split");
  ensure_dir(out_dir);
  const std::size_t threads = resolve_threads(cfg.train);
  const std::uint64_t seed = cfg.train.seed;
  const std::size_t K = cfg.discriminator.k, N = ds.nodes, d = cfg.backbone.gat_out;

  DetectorModel model(cfg);
  {
    const Checkpoint ck = load_checkpoint(backbone_path);
    load_backbone(model.backbone, ck, cfg);
  }
  Backbone& backbone = model.backbone;
  Discriminator& disc = model.discriminator;
  nn::Adam adam_bb(cfg.train.adam()), adam_disc(cfg.train.adam());
  AnomalyBuffer buffer(cfg.discriminator.buffer_capacity);

  const auto& train = ds.split.train;
  const auto& val = ds.split.validation;

  // Support exemplars for validation and inference: K labelled normals and
  // K labelled anomalies from the training split.
  std::vector<std::size_t> ref_index;
  {
    std::vector<std::pair<std::size_t, std::size_t>> normals, anomalies;
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t n = 0; n < train[i].labels.size(); ++n) {
        if (train[i].labels[n] == 0) normals.emplace_back(i, n);
        else if (train[i].labels[n] == 1) anomalies.emplace_back(i, n);
      }
    if (normals.size() < K || anomalies.size() < K)
      fail(ErrorKind::shortage, "training split has " + std::to_string(normals.size()) + " labelled normals and " +
                                    std::to_string(anomalies.size()) + " labelled anomalies; K = " +
                                    std::to_string(K));
    Rng pick(derive_seed(seed, kSupportPick));
    pick.shuffle(normals);
    pick.shuffle(anomalies);
    for (std::size_t i = 0; i < K; ++i) {
      model.support_refs.push_back({train[normals[i].first].id, normals[i].second, 0});
      ref_index.push_back(normals[i].first);
    }
    for (std::size_t i = 0; i < K; ++i) {
      model.support_refs.push_back({train[anomalies[i].first].id, anomalies[i].second, 1});
      ref_index.push_back(anomalies[i].first);
    }
  }

  emit(metrics, {{"stage", 2},
                 {"epochs", cfg.train.stage2_epochs},
                 {"freeze_backbone_after", cfg.train.freeze_backbone_after},
                 {"batch_size", cfg.train.stage2_batch_size},
                 {"lr", cfg.train.learning_rate},
                 {"omega", cfg.discriminator.omega},
                 {"k", K},
                 {"seed", seed},
                 {"dataset", dataset_hash}});

  Stage2Result res;
  res.best_path = join_path(out_dir, "model_best.json");
  res.last_path = join_path(out_dir, "model_last.json");
  double best_f1 = -1.0;
  std::size_t since_best = 0;
  std::vector<Mat> train_cache, val_cache;

  for (std::size_t epoch = 0; epoch < cfg.train.stage2_epochs; ++epoch) {
    const bool frozen = epoch >= cfg.train.freeze_backbone_after;
    if (frozen && train_cache.empty()) {
      backbone.params().set_trainable(false);
      res.backbone_hash_at_freeze = params_hash(backbone.params());
      train_cache = embed_samples(backbone, train, threads);
      val_cache = embed_samples(backbone, val, threads);
    }
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng order_rng(derive_seed(seed, kStage2Order, epoch));
    order_rng.shuffle(order);

    double sum = 0.0;
    std::size_t used = 0, skipped = 0;
    const std::size_t B = cfg.train.stage2_batch_size;
    for (std::size_t b = 0, step = 0; b < order.size(); b += B, ++step) {
      const std::size_t count = std::min(order.size(), b + B) - b;
      std::vector<Mat> emb(count);
      std::vector<std::unique_ptr<ad::Tape>> tapes(count);
      std::vector<ad::Var> emb_vars(count);
      if (frozen) {
        for (std::size_t g = 0; g < count; ++g) emb[g] = train_cache[order[b + g]];
      } else {
        nn::parallel_for(count, threads, [&](std::size_t g) {
          const auto& s = train[order[b + g]];
          tapes[g] = std::make_unique<ad::Tape>();
          emb_vars[g] = backbone.forward(*tapes[g], features_of(s), s.adjacency);
          emb[g] = emb_vars[g].value();
        });
      }
      const Mat features = stack_rows(emb, d);
      std::vector<int> labels;
      for (std::size_t g = 0; g < count; ++g) {
        const auto& l = train[order[b + g]].labels;
        labels.insert(labels.end(), l.begin(), l.end());
      }

      Rng ep_rng(derive_seed(seed, kStage2Episode, epoch, step));
      EpisodeBatch ep;
      try {
        ep = sample_episode(features, labels, buffer, K, cfg.discriminator.query_max, ep_rng);
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::shortage) throw;
        for (std::size_t r = 0; r < labels.size(); ++r)
          if (labels[r] == 1) buffer.push(std::vector<double>(features.row(r).begin(), features.row(r).end()));
        ++skipped;
        continue;
      }
      if (ep.labeled_queries == 0) {
        ++skipped;
        continue;
      }

      ad::Tape tape;
      const ad::Var x_all = frozen ? tape.constant(features) : tape.input(features);
      const ad::Var x = gather_members(tape, x_all, ep);
      const DualGraphState g = disc.run(tape, x, ep);
      const LayerLosses cls = classification_losses(tape, g, ep);
      const ad::Var xn = normalize_rows(ad::slice_rows(x, 0, 2 * K));
      const ad::Var cont = contrastive_loss_disc(tape, ad::slice_rows(xn, 0, 1), ad::slice_rows(xn, 1, K),
                                                 ad::slice_rows(xn, K, 2 * K), cfg.discriminator.tau);
      const ad::Var total = joint_loss(cfg.discriminator.omega, cont, cls);
      const double loss = total.value()[0];
      if (!std::isfinite(loss))
        fail(ErrorKind::divergence, "stage 2 epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                        ": non-finite joint loss");
      ad::Gradients disc_grads;
      tape.backward(total, &disc_grads);
      adam_disc.step(disc.params(), disc_grads);
      if (!frozen) {
        const Mat gx = tape.grad_of(x_all);
        std::vector<ad::Gradients> grads(count);
        nn::parallel_for(count, threads, [&](std::size_t gi) {
          tapes[gi]->backward(emb_vars[gi], gx.rows_slice(gi * N, (gi + 1) * N), &grads[gi]);
        });
        ad::Gradients merged;
        for (auto& gr : grads) merged.merge(gr);
        adam_bb.step(backbone.params(), merged);
      }
      sum += loss;
      ++used;
    }
    res.skipped_batches += skipped;

    // Validation with the current backbone.
    const std::vector<Mat> train_emb = frozen ? std::vector<Mat>{} : embed_samples(backbone, train, threads);
    model.support = support_matrix(model.support_refs, frozen ? train_cache : train_emb, ref_index);
    const std::vector<Mat> val_emb = frozen ? val_cache : embed_samples(backbone, val, threads);
    const MetricsReport rep =
        val.empty() ? MetricsReport{} : score_detections(detections_from(disc, model.support, val, val_emb, threads));
    const std::string bb_hash = params_hash(backbone.params());
    json line = {{"epoch", epoch},
                 {"mean_loss", used ? sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN()},
                 {"lr", cfg.train.learning_rate},
                 {"seed", seed},
                 {"omega", cfg.discriminator.omega},
                 {"frozen", frozen},
                 {"episodes", used},
                 {"skipped", skipped},
                 {"val_precision", rep.precision},
                 {"val_recall", rep.recall},
                 {"val_f1", rep.f1},
                 {"backbone_hash", bb_hash}};
    emit(metrics, line);
    spdlog::debug("stage2 epoch {} loss {:.5f} val f1 {:.4f}", epoch, line["mean_loss"].get<double>(), rep.f1);
    res.last_val = rep;
    res.backbone_hash_final = bb_hash;
    const json extra = {{"stage", 2}, {"epoch", epoch}, {"val", report_json(rep)}, {"dataset", dataset_hash}};
    bool stop = false;
    if (rep.f1 > best_f1) {
      best_f1 = rep.f1;
      res.best_val = rep;
      res.best_epoch = epoch;
      since_best = 0;
      save_checkpoint(res.best_path, model_checkpoint(model, extra.dump()));
    } else if (cfg.train.patience > 0 && ++since_best >= cfg.train.patience) {
      stop = true;
    }
    if (stop || epoch + 1 == cfg.train.stage2_epochs) {
      save_checkpoint(res.last_path, model_checkpoint(model, extra.dump()));
      break;
    }
  }
  if (cfg.train.stage2_epochs == 0) {
    model.support = support_matrix(model.support_refs, embed_samples(backbone, train, threads), ref_index);
    save_checkpoint(res.best_path, model_checkpoint(model));
    save_checkpoint(res.last_path, model_checkpoint(model));
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<SweepRow> omega_sweep(const RunConfig& cfg, const Dataset& ds, const std::string& dataset_hash,
                                  const std::string& backbone_path, const std::vector<double>& omegas,
                                  const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  if (omegas.size() < 2) fail(ErrorKind::config, "sweep needs at least 2 omega values");
  if (seeds.empty()) fail(ErrorKind::config, "sweep needs at least 1 seed");
  std::vector<SweepRow> rows;
  for (double omega : omegas) {
    SweepRow row;
    row.omega = omega;
    for (std::uint64_t s : seeds) {
      RunConfig c = cfg;
      c.discriminator.omega = omega;
      c.train.seed = s;
      const std::string cell = join_path(out_dir, "omega_" + format_double(omega) + "_seed_" + std::to_string(s));
      ensure_dir(cell);
      std::ofstream m(join_path(cell, "metrics.jsonl"));
      const Stage2Result r = run_stage2(c, ds, dataset_hash, backbone_path, cell, &m);
      const auto model = load_model(r.best_path);
      row.f1.push_back(score_detections(detect_samples(*model, ds.split.test, resolve_threads(c.train))).f1);
    }
    double mean = 0.0;
    for (double f : row.f1) mean += f;
    mean /= static_cast<double>(row.f1.size());
    double var = 0.0;
    for (double f : row.f1) var += (f - mean) * (f - mean);
    row.mean_f1 = mean;
    row.spread = std::sqrt(var / static_cast<double>(row.f1.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace wsnad
