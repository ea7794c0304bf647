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
#include <map>
#include <string>
#include <vector>

#include "wsnad/backbone.hpp"

// Analytic forward-pass operation counts for the backbone on one graph.
// A multiply-add counts as 2; elementwise ops count 1 per element.

namespace wsnad {

struct FlopsEntry {
  std::string module;
  std::string operation;
  std::uint64_t flops = 0;
};

struct FlopsLedger {
  std::vector<FlopsEntry> entries;

  void add(const std::string& module, const std::string& operation, std::uint64_t flops);
  std::uint64_t total() const;
  double mflops() const { return static_cast<double>(total()) / 1e6; }
  std::map<std::string, std::uint64_t> by_module() const;
  /// Sum of entries whose operation name matches exactly.
  std::uint64_t operation_total(const std::string& operation) const;
};

enum class FlopsMode { parallel, recurrent };

constexpr std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n) { return 2 * m * k * n; }

/// parallel: one full window of cfg.window steps (embedding readout
/// included). recurrent: the state update for a single step at stream
/// position `position`; the window readout is not part of a step.
FlopsLedger count_flops(const BackboneConfig& cfg, FlopsMode mode, std::size_t nodes, long position = 0);

}  // namespace wsnad
