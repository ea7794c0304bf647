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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wsnad/anomaly_injection.hpp"
#include "wsnad/backbone.hpp"
#include "wsnad/checkpoint.hpp"
#include "wsnad/dataset_io.hpp"
#include "wsnad/discriminator.hpp"
#include "wsnad/pretrain.hpp"

// Run configuration and its flat `section.key = value` text form.

namespace wsnad {

struct TrainConfig {
  std::size_t stage1_epochs = 200;
  std::size_t stage2_epochs = 100;
  std::size_t freeze_backbone_after = 30;  // frozen from this epoch index on
  std::size_t batch_size = 16;
  std::size_t stage2_batch_size = 16;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0: WSNAD_THREADS or hardware
  std::size_t patience = 0;  // epochs without improvement before stopping; 0 disables

  void validate() const;
  nn::AdamConfig adam() const { return {learning_rate, beta1, beta2, adam_eps}; }
};

struct RunConfig {
  BackboneConfig backbone;
  PretrainConfig pretrain;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  AnomalySpec anomaly;
  PreprocessOptions preprocess;

  void validate() const;
};

/// Every key in table order with its current value.
ConfigEcho config_to_pairs(const RunConfig& cfg);
/// Config error for an unknown key or an unparsable value.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// All recognised keys, in table order.
std::vector<std::string> config_keys();

/// `key = value` lines; `#` starts a comment. Errors carry path:line.
void load_config_file(const std::string& path, RunConfig& cfg);
std::string config_to_text(const RunConfig& cfg);

/// Environment name of a key: WSNAD_ + upper-cased key with '.' → '_'.
std::string config_env_name(const std::string& key);
/// Applies any set WSNAD_* variable that names a config key.
void apply_env_overrides(RunConfig& cfg);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace wsnad
