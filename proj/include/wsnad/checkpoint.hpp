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

#include <string>
#include <utility>
#include <vector>

#include "wsnad/nn.hpp"

// Checkpoint file: JSON with a format tag, version, kind, the flat config
// it was trained under, named row-major f64 tensors, free-form extra data
// (as JSON text) and a SHA-256 over everything else.

namespace wsnad {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Mat value;
};

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct Checkpoint {
  std::string kind;  // "backbone" or "model"
  ConfigEcho config;
  std::vector<NamedTensor> tensors;
  std::string extra = "{}";  // JSON object text

  const Mat* find(const std::string& name) const;
  void put(const std::string& name, const Mat& value);
};

/// Writes atomically (temp file + rename). I/O error on failure.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Compat error on a bad format tag, version or content hash.
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_content_hash(const Checkpoint& ckpt);

/// Adds every parameter as `prefix + name`.
void export_params(const nn::ParamStore& store, const std::string& prefix, Checkpoint& ckpt);
/// Copies `prefix + name` into every parameter; missing names or shape
/// differences are compat errors.
void import_params(nn::ParamStore& store, const std::string& prefix, const Checkpoint& ckpt);

/// Keys whose values differ (or exist on one side only) among those whose
/// name starts with one of `sections`. Each line reads `key: have -> want`.
std::vector<std::string> config_diff(const ConfigEcho& have, const ConfigEcho& want,
                                     const std::vector<std::string>& sections);
/// Compat error listing the diff when it is non-empty.
void require_config_match(const ConfigEcho& have, const ConfigEcho& want, const std::vector<std::string>& sections);

/// Hash of parameter values in creation order.
std::string params_hash(const nn::ParamStore& store);

}  // namespace wsnad
