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

#include "wsnad/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>

namespace wsnad {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::config, "train: " + what); };
  if (batch_size == 0 || stage2_batch_size == 0) bad("batch sizes must be positive");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("Adam betas must be in [0,1)");
  if (!(adam_eps > 0.0)) bad("adam_eps must be positive");
  if (stage2_epochs > 0 && freeze_backbone_after >= stage2_epochs)
    bad("freeze_backbone_after (" + std::to_string(freeze_backbone_after) + ") must be below stage2_epochs (" +
        std::to_string(stage2_epochs) + ")");
}

void RunConfig::validate() const {
  backbone.validate();
  discriminator.validate();
  train.validate();
  anomaly.validate();
  if (!(pretrain.tau > 0.0)) fail(ErrorKind::config, "pretrain.tau must be positive");
  if (pretrain.k_neg == 0) fail(ErrorKind::config, "pretrain.k_neg must be at least 1");
  if (discriminator.k < 2) fail(ErrorKind::config, "discriminator.k must be at least 2 (anchor plus a positive)");
  if (preprocess.window != backbone.window)
    fail(ErrorKind::config, "preprocess.window (" + std::to_string(preprocess.window) + ") differs from backbone.window (" +
                                std::to_string(backbone.window) + ")");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    fail(ErrorKind::config, "config key " + key + ": cannot parse '" + text + "'");
  return v;
}

Key size_key(const std::string& name, std::function<std::size_t&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { RunConfig copy = c;
            return std::to_string(ref(copy)); },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_number<std::size_t>(name, v); }};
}

Key u64_key(const std::string& name, std::function<std::uint64_t&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { RunConfig copy = c;
            return std::to_string(ref(copy)); },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_number<std::uint64_t>(name, v); }};
}

Key real_key(const std::string& name, std::function<double&(RunConfig&)> ref) {
  return {name, [ref](const RunConfig& c) { RunConfig copy = c;
            return format_double(ref(copy)); },
          [ref, name](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(name, v); }};
}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = [] {
    std::vector<Key> t;
#define WSNAD_SIZE(name, member) t.push_back(size_key(name, [](RunConfig& c) -> std::size_t& { return c.member; }))
#define WSNAD_U64(name, member) t.push_back(u64_key(name, [](RunConfig& c) -> std::uint64_t& { return c.member; }))
#define WSNAD_REAL(name, member) t.push_back(real_key(name, [](RunConfig& c) -> double& { return c.member; }))
    WSNAD_SIZE("backbone.layers", backbone.layers);
    WSNAD_SIZE("backbone.heads", backbone.heads);
    WSNAD_SIZE("backbone.d_model", backbone.d_model);
    WSNAD_SIZE("backbone.msr_qk_dim", backbone.msr_qk_dim);
    WSNAD_SIZE("backbone.cr_qk_dim", backbone.cr_qk_dim);
    WSNAD_SIZE("backbone.modalities", backbone.modalities);
    WSNAD_SIZE("backbone.window", backbone.window);
    WSNAD_SIZE("backbone.gat_out", backbone.gat_out);
    WSNAD_REAL("backbone.rotary_base", backbone.rotary_base);
    WSNAD_REAL("backbone.gn_eps", backbone.gn_eps);
    WSNAD_REAL("backbone.ln_eps", backbone.ln_eps);
    WSNAD_REAL("backbone.gat_slope", backbone.gat_slope);

    WSNAD_SIZE("pretrain.walk_len", pretrain.walk_len);
    WSNAD_SIZE("pretrain.k_neg", pretrain.k_neg);
    WSNAD_REAL("pretrain.tau", pretrain.tau);

    WSNAD_SIZE("discriminator.layers", discriminator.layers);
    WSNAD_SIZE("discriminator.k", discriminator.k);
    WSNAD_REAL("discriminator.lambda_ins", discriminator.lambda_ins);
    WSNAD_REAL("discriminator.lambda_dis", discriminator.lambda_dis);
    WSNAD_REAL("discriminator.tau", discriminator.tau);
    WSNAD_SIZE("discriminator.buffer_capacity", discriminator.buffer_capacity);
    WSNAD_SIZE("discriminator.query_max", discriminator.query_max);

    WSNAD_SIZE("train.stage1_epochs", train.stage1_epochs);
    WSNAD_SIZE("train.stage2_epochs", train.stage2_epochs);
    WSNAD_SIZE("train.freeze_backbone_after", train.freeze_backbone_after);
    WSNAD_SIZE("train.batch_size", train.batch_size);
    WSNAD_SIZE("train.stage2_batch_size", train.stage2_batch_size);
    WSNAD_REAL("train.learning_rate", train.learning_rate);
    WSNAD_REAL("train.beta1", train.beta1);
    WSNAD_REAL("train.beta2", train.beta2);
    WSNAD_REAL("train.adam_eps", train.adam_eps);
    WSNAD_REAL("train.omega", discriminator.omega);
    WSNAD_U64("train.seed", train.seed);
    WSNAD_SIZE("train.threads", train.threads);
    WSNAD_SIZE("train.patience", train.patience);

    WSNAD_REAL("anomaly.injection_rate", anomaly.injection_rate);
    WSNAD_REAL("anomaly.labeled_fraction", anomaly.labeled_fraction);
    WSNAD_REAL("anomaly.normal_per_anomalous", anomaly.normal_per_anomalous);
    for (std::size_t i = 0; i < kAnomalyTypes; ++i) {
      const std::string name = std::string("anomaly.mix.") + to_string(static_cast<AnomalyType>(i));
      t.push_back(real_key(name, [i](RunConfig& c) -> double& { return c.anomaly.type_mix[i]; }));
    }
    WSNAD_REAL("anomaly.magnitude", anomaly.magnitude);
    WSNAD_REAL("anomaly.shift_magnitude", anomaly.shift_magnitude);
    WSNAD_U64("anomaly.seed", anomaly.seed);

    WSNAD_REAL("preprocess.interval", preprocess.interval);
    WSNAD_SIZE("preprocess.k", preprocess.k);
    WSNAD_SIZE("preprocess.window", preprocess.window);
    WSNAD_REAL("preprocess.train_ratio", preprocess.ratios[0]);
    WSNAD_REAL("preprocess.validation_ratio", preprocess.ratios[1]);
    WSNAD_REAL("preprocess.test_ratio", preprocess.ratios[2]);
    t.push_back({"preprocess.adjacency",
                 [](const RunConfig& c) {
                   return std::string(c.preprocess.adjacency.kind == AdjacencyRule::Kind::knn ? "knn" : "radius");
                 },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "radius") c.preprocess.adjacency.kind = AdjacencyRule::Kind::radius;
                   else if (v == "knn") c.preprocess.adjacency.kind = AdjacencyRule::Kind::knn;
                   else fail(ErrorKind::config, "preprocess.adjacency must be radius or knn, got '" + v + "'");
                 }});
    WSNAD_REAL("preprocess.radius", preprocess.adjacency.radius);
    WSNAD_SIZE("preprocess.neighbors", preprocess.adjacency.neighbors);
#undef WSNAD_SIZE
#undef WSNAD_U64
#undef WSNAD_REAL
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigEcho config_to_pairs(const RunConfig& cfg) {
  ConfigEcho out;
  for (const auto& k : key_table()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : key_table())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.name);
  return out;
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config, path + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::config, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_to_pairs(cfg)) out += k + " = " + v + "\n";
  return out;
}

std::string config_env_name(const std::string& key) {
  std::string out = "WSNAD_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void apply_env_overrides(RunConfig& cfg) {
  for (const auto& k : key_table())
    if (const char* v = std::getenv(config_env_name(k.name).c_str())) {
      try {
        k.set(cfg, trim(v));
      } catch (const Error& e) {
        fail(ErrorKind::config, config_env_name(k.name) + ": " + e.what());
      }
    }
}

}  // namespace wsnad
