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

#include "wsnad/synthetic.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "wsnad/random.hpp"

namespace wsnad {

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.nodes == 0 || cfg.modalities == 0 || cfg.steps < 2) fail(ErrorKind::config, "synthetic: empty shape");
  if (!(cfg.interval > 0.0) || !(cfg.period > 0.0)) fail(ErrorKind::config, "synthetic: interval and period must be positive");
  Rng rng(cfg.seed);
  SyntheticData out;
  out.positions = Mat(cfg.nodes, 2);
  for (double& v : out.positions.storage()) v = rng.uniform();
  const char* base_names[] = {"temperature", "humidity", "voltage"};
  for (std::size_t m = 0; m < cfg.modalities; ++m)
    out.modality_names.push_back(m < 3 ? base_names[m] : "channel" + std::to_string(m));

  // Shared regional weather: a daily cycle plus a slow AR(1) drift.
  std::vector<double> drift(cfg.steps + 64, 0.0);
  for (std::size_t t = 1; t < drift.size(); ++t) drift[t] = 0.995 * drift[t - 1] + 0.03 * rng.normal();
  const double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> lag(cfg.nodes), gain(cfg.nodes), drain(cfg.nodes);
  for (std::size_t n = 0; n < cfg.nodes; ++n) {
    lag[n] = 8.0 * (out.positions(n, 0) + out.positions(n, 1));
    gain[n] = 0.8 + 0.4 * rng.uniform();
    drain[n] = 0.1 + 0.1 * rng.uniform();
  }

  out.t_start = cfg.t_start;
  out.t_end = cfg.t_start + static_cast<double>(cfg.steps - 1) * cfg.interval;
  out.records.reserve(cfg.nodes * cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    for (std::size_t n = 0; n < cfg.nodes; ++n) {
      const double phase = (static_cast<double>(t) - lag[n]) / cfg.period;
      const auto di = static_cast<std::size_t>(std::max(0.0, static_cast<double>(t) + 32.0 - lag[n]));
      const double g = gain[n] * (std::sin(two_pi * phase) + 0.3 * std::sin(2.0 * two_pi * phase + 0.7)) +
                       drift[std::min(di, drift.size() - 1)];
      RawRecord r;
      r.node = n;
      double dt = cfg.jitter * cfg.interval * (rng.uniform() - 0.5);
      r.timestamp = cfg.t_start + static_cast<double>(t) * cfg.interval + dt;
      if (t == 0 || t + 1 == cfg.steps) r.timestamp = cfg.t_start + static_cast<double>(t) * cfg.interval;
      r.values.resize(cfg.modalities);
      for (std::size_t m = 0; m < cfg.modalities; ++m) {
        double v;
        switch (m) {
          case 0: v = 20.0 + 5.0 * g + cfg.noise * 5.0 * rng.normal(); break;
          case 1: v = 60.0 - 0.9 * 15.0 * g + cfg.noise * 15.0 * rng.normal(); break;
          case 2:
            v = 3.0 - drain[n] * static_cast<double>(t) / static_cast<double>(cfg.steps) + 0.02 * g +
                cfg.noise * 0.05 * rng.normal();
            break;
          default: v = std::sin(two_pi * phase * static_cast<double>(m)) + cfg.noise * rng.normal(); break;
        }
        const bool edge = t == 0 || t + 1 == cfg.steps;
        if (!edge && rng.uniform() < cfg.missing_rate) v = std::numeric_limits<double>::quiet_NaN();
        r.values[m] = v;
      }
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace wsnad
