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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("wsnad_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& name) { return (workdir() / name).string(); }

// Runs a command with stdout captured to `out_file`; returns the exit status.
int run(const std::string& args, const std::string& out_file = "/dev/null") {
  const std::string cmd = args + " > " + out_file + " 2> " + at("stderr.txt");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string wsnad(const std::string& args) { return std::string(WSNAD_BIN) + " " + args; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

json json_of(const std::string& path) { return json::parse(slurp(path)); }

const std::string& config_file() {
  static const std::string path = [] {
    const std::string p = at("tiny.cfg");
    std::ofstream out(p);
    out << "# small enough for a unit test\n"
           "backbone.layers = 1\nbackbone.heads = 1\nbackbone.d_model = 6\nbackbone.msr_qk_dim = 2\n"
           "backbone.cr_qk_dim = 2\nbackbone.window = 8\nbackbone.gat_out = 4\npreprocess.window = 8\n"
           "preprocess.radius = 0.45\n"
           "discriminator.k = 2\ndiscriminator.layers = 2\ndiscriminator.query_max = 32\npretrain.k_neg = 2\n"
           "anomaly.injection_rate = 0.05\nanomaly.labeled_fraction = 0.1\n"
           "train.stage1_epochs = 2\ntrain.stage2_epochs = 2\ntrain.freeze_backbone_after = 1\n"
           "train.batch_size = 8\ntrain.stage2_batch_size = 32\ntrain.learning_rate = 0.001\ntrain.threads = 1\n";
    return p;
  }();
  return path;
}

// synth → preprocess → inject → pretrain → train, once for the whole file.
struct Pipeline {
  bool ok = false;
};

const Pipeline& pipeline() {
  static const Pipeline p = [] {
    Pipeline r;
    const std::string cfg = " --config " + config_file() + " --log-level error";
    r.ok = run(std::string(WSNAD_SYNTH_BIN) + " --steps 1700 --seed 5 --records " + at("rec.csv") +
               " --positions " + at("pos.csv")) == 0 &&
           run(wsnad("preprocess --input " + at("rec.csv") + " --positions " + at("pos.csv") + " --out " +
                     at("ds") + cfg),
               at("pre1.json")) == 0 &&
           run(wsnad("inject --dataset " + at("ds") + " --out " + at("dsi") + cfg)) == 0 &&
           run(wsnad("pretrain --dataset " + at("ds") + " --out " + at("s1") + cfg)) == 0 &&
           run(wsnad("train --dataset " + at("dsi") + " --backbone " + at("s1/backbone_best.json") + " --out " +
                     at("s2") + cfg),
               at("train.json")) == 0;
    return r;
  }();
  return p;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run(wsnad("")) == 2);
  CHECK(run(wsnad("nosuchcommand")) == 2);
  CHECK(run(wsnad("flops --mode sideways")) == 2);
  CHECK(run(wsnad("flops --set train.nope=1")) == 2);
  CHECK(run(wsnad("flops --set backbone.d_model=7")) == 2);
  REQUIRE(run(std::string(WSNAD_SYNTH_BIN) + " --steps 200 --records " + at("r0.csv") + " --positions " +
              at("p0.csv")) == 0);
  CHECK(run(wsnad("preprocess --k 0 --input " + at("r0.csv") + " --positions " + at("p0.csv") + " --out " +
                  at("bad"))) == 2);
  CHECK(run(wsnad("--help")) == 0);
  CHECK(run(wsnad("train --help"), at("help.txt")) == 0);
  CHECK(slurp(at("help.txt")).find("--backbone") != std::string::npos);
}

TEST_CASE("flops command") {
  REQUIRE(run(wsnad("flops --mode recurrent --position 1"), at("f1.json")) == 0);
  REQUIRE(run(wsnad("flops --mode recurrent --position 100"), at("f100.json")) == 0);
  CHECK(json_of(at("f1.json"))["total_flops"] == json_of(at("f100.json"))["total_flops"]);
  REQUIRE(run(wsnad("flops"), at("fp.json")) == 0);
  CHECK(json_of(at("fp.json"))["total_flops"].get<double>() > json_of(at("f1.json"))["total_flops"].get<double>());
}

TEST_CASE("preprocess is deterministic") {
  REQUIRE(pipeline().ok);
  const std::string cfg = " --config " + config_file();
  REQUIRE(run(wsnad("preprocess --input " + at("rec.csv") + " --positions " + at("pos.csv") + " --out " + at("ds2") +
                    cfg),
              at("pre2.json")) == 0);
  const json a = json_of(at("pre1.json")), b = json_of(at("pre2.json"));
  CHECK(a["manifest_sha256"] == b["manifest_sha256"]);
  // 212 windows: floors 148/42/21, the leftover window goes to the first largest remainder
  CHECK(a["train"].get<int>() == 148);
  CHECK(a["validation"].get<int>() == 43);
  CHECK(a["test"].get<int>() == 21);
}

TEST_CASE("train, eval, detect and plotdata") {
  REQUIRE(pipeline().ok);
  const json report = json_of(at("train.json"));
  CHECK(report.contains("test_best"));
  CHECK(fs::exists(at("s2/model_best.json")));
  CHECK(fs::exists(at("s2/metrics_stage2.jsonl")));

  REQUIRE(run(wsnad("eval --model " + at("s2/model_best.json") + " --dataset " + at("dsi")), at("eval.json")) == 0);
  CHECK(json_of(at("eval.json"))["f1"] == report["test_best"]["f1"]);

  REQUIRE(run(wsnad("detect --window 16 --stride 7 --model " + at("s2/model_best.json") + " --input " + at("dsi") +
                    " --out " + at("det.jsonl"))) == 0);
  CHECK(fs::exists(at("det.jsonl.meta.json")));
  REQUIRE(run(wsnad("plotdata --node 2 --detections " + at("det.jsonl") + " --raw " + at("dsi") + " --out " +
                    at("plot.csv"))) == 0);
  CHECK(slurp(at("plot.csv")).rfind("sample_id,", 0) == 0);

  // detections from the injected dataset do not belong to the clean one
  CHECK(run(wsnad("plotdata --node 2 --detections " + at("det.jsonl") + " --raw " + at("ds") + " --out " +
                  at("plot2.csv"))) == 3);
  CHECK(slurp(at("stderr.txt")).find(json_of(at("det.jsonl.meta.json"))["manifest_sha256"].get<std::string>()) !=
        std::string::npos);
}

TEST_CASE("incompatible configs exit with 3") {
  REQUIRE(pipeline().ok);
  const std::string cfg = " --config " + config_file();
  CHECK(run(wsnad("eval --model " + at("s2/model_best.json") + " --dataset " + at("dsi") + cfg +
                  " --set discriminator.layers=3")) == 3);
  CHECK(slurp(at("stderr.txt")).find("discriminator.layers") != std::string::npos);
  CHECK(run(wsnad("train --dataset " + at("dsi") + " --backbone " + at("s1/backbone_best.json") + " --out " +
                  at("s2x") + cfg + " --set backbone.gat_out=6")) == 3);

  // a corrupted checkpoint fails its content hash
  std::string text = slurp(at("s2/model_best.json"));
  const auto pos = text.find("\"tensors\"");
  REQUIRE(pos != std::string::npos);
  const auto digit = text.find_first_of("123456789", pos);
  text[digit] = text[digit] == '9' ? '8' : static_cast<char>(text[digit] + 1);
  {
    std::ofstream out(at("broken.json"), std::ios::binary);
    out << text;
  }
  CHECK(run(wsnad("eval --model " + at("broken.json") + " --dataset " + at("dsi"))) == 3);
}

TEST_CASE("train needs labels") {
  REQUIRE(pipeline().ok);
  CHECK(run(wsnad("train --dataset " + at("ds") + " --backbone " + at("s1/backbone_best.json") + " --out " +
                  at("s2y") + " --config " + config_file())) == 2);
  CHECK(run(wsnad("inject --dataset " + at("dsi") + " --out " + at("dsii") + " --config " + config_file())) == 2);
}
