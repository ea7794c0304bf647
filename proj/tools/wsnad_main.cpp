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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spdlog/spdlog.h"
#include "wsnad/detect.hpp"
#include "wsnad/flops.hpp"
#include "wsnad/hash.hpp"

using namespace wsnad;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kCompat = 3, kDivergence = 4 };

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::compat: return kCompat;
    case ErrorKind::divergence: return kDivergence;
    default: return kUsage;
  }
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string log_level = "info";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed for every random stream of this command");
  sub->add_option("--set", c.overrides, "Config override key=value (repeatable)");
  sub->add_option("--log-level", c.log_level, "trace|debug|info|warn|error|off")->capture_default_str();
}

// defaults < config file < WSNAD_* environment < --set < --seed
RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) load_config_file(c.config_path, cfg);
  apply_env_overrides(cfg);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) {
    cfg.train.seed = *c.seed;
    cfg.anomaly.seed = *c.seed;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  return out;
}

std::string path_in(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

json report_json(const MetricsReport& r) {
  return {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"tn", r.tn},
          {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

const std::vector<AttributedGraphSample>& split_named(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.split.train;
  if (name == "validation") return ds.split.validation;
  if (name == "test") return ds.split.test;
  fail(ErrorKind::config, "unknown split '" + name + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) out.push_back(std::stod(item, &used));
      else out.push_back(static_cast<T>(std::stoull(item, &used)));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::config, what + ": cannot parse '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor-network anomaly detection: preprocessing, training, detection and evaluation"};
  app.require_subcommand(1);
  app.footer("Config keys may also be set through the environment as WSNAD_<SECTION>_<KEY>, e.g.\n"
             "WSNAD_TRAIN_LEARNING_RATE=0.001. WSNAD_THREADS caps worker threads; WSNAD_KERNELS=scalar|avx2\n"
             "forces a kernel table. Exit codes: 0 ok, 2 usage/validation, 3 compatibility, 4 divergence.");
  Common common;

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Align, window, normalise and split raw CSV readings");
  add_common(pre, common);
  std::string pre_input, pre_positions, pre_out;
  std::optional<double> pre_interval;
  std::optional<std::size_t> pre_k, pre_window;
  pre->add_option("--input", pre_input, "CSV: timestamp,node_id,<modality...>")->required()->check(CLI::ExistingFile);
  pre->add_option("--positions", pre_positions, "CSV: node_id,x,y")->required()->check(CLI::ExistingFile);
  pre->add_option("--interval", pre_interval, "Alignment grid spacing in seconds")->check(CLI::PositiveNumber);
  pre->add_option("--k", pre_k, "Downsampling factor")->check(CLI::PositiveNumber);
  pre->add_option("--window", pre_window, "Window length W after downsampling")->check(CLI::PositiveNumber);
  pre->add_option("--out", pre_out, "Output dataset directory")->required();

  // inject
  auto* inj = app.add_subcommand("inject", "Inject labelled synthetic anomalies into a dataset");
  add_common(inj, common);
  std::string inj_dataset, inj_out;
  inj->add_option("--dataset", inj_dataset, "Input dataset directory")->required()->check(CLI::ExistingDirectory);
  inj->add_option("--out", inj_out, "Output dataset directory")->required();

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "Stage 1: contrastive backbone pretraining");
  add_common(pt, common);
  std::string pt_dataset, pt_out;
  pt->add_option("--dataset", pt_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pt->add_option("--out", pt_out, "Output directory for checkpoints and metrics")->required();

  // train
  auto* tr = app.add_subcommand("train", "Stage 2: joint discriminator training");
  add_common(tr, common);
  std::string tr_dataset, tr_backbone, tr_out;
  tr->add_option("--dataset", tr_dataset, "Injected dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--backbone", tr_backbone, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Output directory for checkpoints, metrics and report")->required();

  // detect
  auto* det = app.add_subcommand("detect", "Score every node with the recurrent streaming path");
  add_common(det, common);
  std::string det_model, det_input, det_out;
  StreamDetectOptions det_opt;
  det->add_option("--model", det_model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  det->add_option("--input", det_input, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  det->add_option("--out", det_out, "Output JSONL (a .meta.json sidecar is written next to it)")->required();
  det->add_option("--window", det_opt.window, "Steps streamed per detection")->capture_default_str()->check(
      CLI::PositiveNumber);
  det->add_option("--stride", det_opt.stride, "Score every stride-th sample of each stream")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  // eval
  auto* ev = app.add_subcommand("eval", "Precision, recall and F1 of a model on a dataset split");
  add_common(ev, common);
  std::string ev_model, ev_dataset, ev_split = "test", ev_out;
  ev->add_option("--model", ev_model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_dataset, "Injected dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", ev_split, "train|validation|test")->capture_default_str();
  ev->add_option("--out", ev_out, "Write the report JSON here as well as to stdout");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Stage 2 over a grid of omega values and seeds");
  add_common(sw, common);
  std::string sw_dataset, sw_backbone, sw_out, sw_omegas = "0,0.2,0.4,0.5,0.6,0.8", sw_seeds = "1,2,3";
  sw->add_option("--dataset", sw_dataset, "Injected dataset directory")->required()->check(CLI::ExistingDirectory);
  sw->add_option("--backbone", sw_backbone, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  sw->add_option("--omegas", sw_omegas, "Comma-separated omega values")->capture_default_str();
  sw->add_option("--seeds", sw_seeds, "Comma-separated stage-2 seeds")->capture_default_str();
  sw->add_option("--out", sw_out, "Output directory")->required();

  // flops
  auto* fl = app.add_subcommand("flops", "Analytic forward-pass operation count of the backbone");
  add_common(fl, common);
  std::size_t fl_nodes = 8;
  long fl_position = 0;
  std::string fl_mode = "parallel";
  fl->add_option("--nodes", fl_nodes, "Nodes per graph")->capture_default_str()->check(CLI::PositiveNumber);
  fl->add_option("--mode", fl_mode, "parallel|recurrent")->capture_default_str()->check(
      CLI::IsMember({"parallel", "recurrent"}));
  fl->add_option("--position", fl_position, "Stream position for recurrent mode")->capture_default_str();

  // plotdata
  auto* pl = app.add_subcommand("plotdata", "Per-step series of one node with truth and predicted flags");
  add_common(pl, common);
  std::string pl_detections, pl_raw, pl_out;
  long pl_node = 0;
  pl->add_option("--detections", pl_detections, "Detection JSONL from `detect`")->required()->check(
      CLI::ExistingFile);
  pl->add_option("--raw", pl_raw, "Dataset directory the detections were made on")->required()->check(
      CLI::ExistingDirectory);
  pl->add_option("--node", pl_node, "Node id")->required();
  pl->add_option("--out", pl_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    RunConfig cfg = resolve_config(common);

    if (pre->parsed()) {
      if (pre_interval) cfg.preprocess.interval = *pre_interval;
      if (pre_k) cfg.preprocess.k = *pre_k;
      if (pre_window) {
        cfg.preprocess.window = *pre_window;
        cfg.backbone.window = *pre_window;
      }
      std::vector<std::string> names;
      const auto records = read_records_csv(pre_input, &names);
      const Mat positions = read_positions_csv(pre_positions);
      const Dataset ds = preprocess_records(records, names, positions, cfg.preprocess);
      const std::string hash = save_dataset(pre_out, ds);
      std::cout << json{{"dataset", pre_out},
                        {"manifest_sha256", hash},
                        {"train", ds.split.train.size()},
                        {"validation", ds.split.validation.size()},
                        {"test", ds.split.test.size()}}
                       .dump()
                << '\n';
    } else if (inj->parsed()) {
      Dataset ds = load_dataset(inj_dataset);
      if (ds.injected) fail(ErrorKind::data, inj_dataset + " already carries injected anomalies");
      ds.injections = inject_anomalies(ds.split, cfg.anomaly);
      ds.injected = true;
      const std::string hash = save_dataset(inj_out, ds);
      std::cout << json{{"dataset", inj_out}, {"manifest_sha256", hash}, {"injected", ds.injections.size()}}.dump()
                << '\n';
    } else if (pt->parsed()) {
      std::string hash;
      const Dataset ds = load_dataset(pt_dataset, &hash);
      std::filesystem::create_directories(pt_out);
      auto metrics = open_out(path_in(pt_out, "metrics_stage1.jsonl"));
      const Stage1Result r = run_stage1(cfg, ds, hash, pt_out, &metrics);
      std::cout << json{{"best", r.best_path},
                        {"last", r.last_path},
                        {"best_epoch", r.best_epoch},
                        {"best_val_loss", r.best_val_loss},
                        {"last_val_loss", r.last_val_loss}}
                       .dump()
                << '\n';
    } else if (tr->parsed()) {
      std::string hash;
      const Dataset ds = load_dataset(tr_dataset, &hash);
      if (!ds.injected) fail(ErrorKind::data, tr_dataset + " has no labels; run `inject` first");
      std::filesystem::create_directories(tr_out);
      auto metrics = open_out(path_in(tr_out, "metrics_stage2.jsonl"));
      const Stage2Result r = run_stage2(cfg, ds, hash, tr_backbone, tr_out, &metrics);
      const std::size_t threads = resolve_threads(cfg.train);
      const auto best = load_model(r.best_path);
      const auto last = load_model(r.last_path);
      json report = {{"dataset", hash},
                     {"seed", cfg.train.seed},
                     {"omega", cfg.discriminator.omega},
                     {"best_epoch", r.best_epoch},
                     {"skipped_batches", r.skipped_batches},
                     {"validation_best", report_json(r.best_val)},
                     {"validation_last", report_json(r.last_val)},
                     {"test_best", report_json(score_detections(detect_samples(*best, ds.split.test, threads)))},
                     {"test_last", report_json(score_detections(detect_samples(*last, ds.split.test, threads)))}};
      write_text(path_in(tr_out, "report.json"), report.dump(2) + "\n");
      std::cout << report.dump() << '\n';
    } else if (det->parsed()) {
      std::string hash;
      const Dataset ds = load_dataset(det_input, &hash);
      const RunConfig* requested = common.config_path.empty() && common.overrides.empty() ? nullptr : &cfg;
      const auto model = load_model(det_model, requested);
      det_opt.threads = resolve_threads(cfg.train);
      const auto found = detect_stream(*model, ds, det_opt);
      {
        auto out = open_out(det_out);
        for (const auto& d : found) out << to_json_line(d) << '\n';
      }
      const json meta = {{"manifest_sha256", hash},
                         {"model_sha256", checkpoint_content_hash(load_checkpoint(det_model))},
                         {"window", det_opt.window},
                         {"stride", det_opt.stride},
                         {"records", found.size()}};
      write_text(det_out + ".meta.json", meta.dump(2) + "\n");
      std::cout << json{{"records", found.size()}, {"out", det_out}}.dump() << '\n';
    } else if (ev->parsed()) {
      std::string hash;
      const Dataset ds = load_dataset(ev_dataset, &hash);
      const RunConfig* requested = common.config_path.empty() && common.overrides.empty() ? nullptr : &cfg;
      const auto model = load_model(ev_model, requested);
      const auto rep = score_detections(detect_samples(*model, split_named(ds, ev_split), resolve_threads(cfg.train)));
      json j = report_json(rep);
      j["split"] = ev_split;
      j["dataset"] = hash;
      if (!ev_out.empty()) write_text(ev_out, j.dump(2) + "\n");
      std::cout << j.dump() << '\n';
    } else if (sw->parsed()) {
      std::string hash;
      const Dataset ds = load_dataset(sw_dataset, &hash);
      const auto omegas = parse_list<double>(sw_omegas, "--omegas");
      const auto seeds = parse_list<std::uint64_t>(sw_seeds, "--seeds");
      const auto rows = omega_sweep(cfg, ds, hash, sw_backbone, omegas, seeds, sw_out);
      json table = json::array();
      std::string csv = "omega,mean_f1,spread\n";
      for (const auto& r : rows) {
        table.push_back({{"omega", r.omega}, {"mean_f1", r.mean_f1}, {"spread", r.spread}, {"f1", r.f1}});
        csv += format_double(r.omega) + "," + format_double(r.mean_f1) + "," + format_double(r.spread) + "\n";
      }
      write_text(path_in(sw_out, "sweep.json"), table.dump(2) + "\n");
      write_text(path_in(sw_out, "sweep.csv"), csv);
      std::cout << csv;
    } else if (fl->parsed()) {
      const auto mode = fl_mode == "recurrent" ? FlopsMode::recurrent : FlopsMode::parallel;
      const FlopsLedger led = count_flops(cfg.backbone, mode, fl_nodes, fl_position);
      json modules = json::object();
      for (const auto& [m, f] : led.by_module()) modules[m] = f;
      json entries = json::array();
      for (const auto& e : led.entries)
        entries.push_back({{"module", e.module}, {"operation", e.operation}, {"flops", e.flops}});
      std::cout << json{{"mode", fl_mode},
                        {"nodes", fl_nodes},
                        {"window", cfg.backbone.window},
                        {"total_flops", led.total()},
                        {"mflops", led.mflops()},
                        {"by_module", modules},
                        {"entries", entries}}
                       .dump(2)
                << '\n';
    } else if (pl->parsed()) {
      std::ifstream meta_in(pl_detections + ".meta.json");
      if (!meta_in) fail(ErrorKind::compat, "missing " + pl_detections + ".meta.json; cannot verify the dataset");
      const json meta = json::parse(meta_in);
      const std::string want = meta.value("manifest_sha256", "");
      const std::string have = manifest_hash_of(pl_raw);
      if (want != have)
        fail(ErrorKind::compat, "detections were made on dataset " + want + " but " + pl_raw + " has manifest " + have);
      if (pl_node < 0) fail(ErrorKind::config, "node id must be nonnegative");
      const Dataset ds = load_dataset(pl_raw);
      std::vector<StreamDetection> found;
      std::ifstream in(pl_detections);
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) found.push_back(stream_detection_from_json_line(line));
      std::ostringstream csv;
      write_plot_csv(csv, ds, static_cast<std::size_t>(pl_node), found);
      write_text(pl_out, csv.str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
