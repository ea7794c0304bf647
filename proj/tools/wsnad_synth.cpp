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

#include <iostream>

#include "CLI11.hpp"
#include "wsnad/dataset_io.hpp"
#include "wsnad/synthetic.hpp"

using namespace wsnad;

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic sensor-network readings as CSV"};
  SyntheticConfig cfg;
  std::string records_path, positions_path;
  app.add_option("--nodes", cfg.nodes)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--modalities", cfg.modalities, "1 to 3")->capture_default_str()->check(CLI::Range(1, 3));
  app.add_option("--steps", cfg.steps)->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--interval", cfg.interval, "Seconds between readings")->capture_default_str();
  app.add_option("--period", cfg.period, "Steps per daily cycle")->capture_default_str();
  app.add_option("--noise", cfg.noise)->capture_default_str();
  app.add_option("--missing-rate", cfg.missing_rate)->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--records", records_path, "Output readings CSV")->required();
  app.add_option("--positions", positions_path, "Output node positions CSV")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    const SyntheticData data = generate_synthetic(cfg);
    write_records_csv(records_path, data.records, data.modality_names);
    write_positions_csv(positions_path, data.positions);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
