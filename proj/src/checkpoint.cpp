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

#include "wsnad/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "wsnad/hash.hpp"

namespace wsnad {

using json = nlohmann::ordered_json;

const Mat* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

void Checkpoint::put(const std::string& name, const Mat& value) {
  for (auto& t : tensors)
    if (t.name == name) {
      t.value = value;
      return;
    }
  tensors.push_back({name, value});
}

namespace {

json body_of(const Checkpoint& c) {
  json j;
  j["format"] = "wsnad-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = c.kind;
  json cfg = json::object();
  for (const auto& [k, v] : c.config) cfg[k] = v;
  j["config"] = cfg;
  json ts = json::array();
  for (const auto& t : c.tensors) {
    json e;
    e["name"] = t.name;
    e["shape"] = {t.value.rows(), t.value.cols()};
    e["dtype"] = "f64";
    e["values"] = t.value.storage();
    ts.push_back(std::move(e));
  }
  j["tensors"] = ts;
  j["extra"] = json::parse(c.extra);
  return j;
}

}  // namespace

std::string checkpoint_content_hash(const Checkpoint& ckpt) { return sha256_hex(body_of(ckpt).dump()); }

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j = body_of(ckpt);
  j["content_sha256"] = sha256_hex(j.dump());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write checkpoint " + tmp);
    out << j.dump() << '\n';
    if (!out) fail(ErrorKind::io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot move checkpoint into place at " + path + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    fail(ErrorKind::compat, path + ": not a checkpoint (" + e.what() + ")");
  }
  if (j.value("format", "") != "wsnad-checkpoint") fail(ErrorKind::compat, path + ": not a checkpoint");
  if (j.value("version", -1) != kCheckpointVersion)
    fail(ErrorKind::compat, path + ": checkpoint version " + j["version"].dump() + ", expected " +
                                std::to_string(kCheckpointVersion));
  const std::string stored = j.value("content_sha256", "");
  j.erase("content_sha256");
  if (sha256_hex(j.dump()) != stored) fail(ErrorKind::compat, path + ": content hash mismatch");

  Checkpoint c;
  try {
    c.kind = j.at("kind").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) c.config.emplace_back(k, v.get<std::string>());
    for (const auto& e : j.at("tensors")) {
      if (e.at("dtype") != "f64") fail(ErrorKind::compat, path + ": unsupported dtype " + e.at("dtype").dump());
      const auto rows = e.at("shape").at(0).get<std::size_t>(), cols = e.at("shape").at(1).get<std::size_t>();
      auto values = e.at("values").get<std::vector<double>>();
      if (values.size() != rows * cols) fail(ErrorKind::compat, path + ": tensor size/shape mismatch");
      c.tensors.push_back({e.at("name").get<std::string>(), Mat(rows, cols, std::move(values))});
    }
    c.extra = j.at("extra").dump();
  } catch (const json::exception& e) {
    fail(ErrorKind::compat, path + ": malformed checkpoint (" + e.what() + ")");
  }
  return c;
}

void export_params(const nn::ParamStore& store, const std::string& prefix, Checkpoint& ckpt) {
  for (const auto& p : store.all()) ckpt.put(prefix + p.name, p.value);
}

void import_params(nn::ParamStore& store, const std::string& prefix, const Checkpoint& ckpt) {
  for (auto& p : store.all()) {
    const Mat* m = ckpt.find(prefix + p.name);
    if (!m) fail(ErrorKind::compat, "checkpoint lacks tensor " + prefix + p.name);
    if (!m->same_shape(p.value))
      fail(ErrorKind::compat, "tensor " + prefix + p.name + " is " + m->shape_str() + ", model expects " +
                                  p.value.shape_str());
    p.value = *m;
  }
}

std::vector<std::string> config_diff(const ConfigEcho& have, const ConfigEcho& want,
                                     const std::vector<std::string>& sections) {
  auto in_scope = [&](const std::string& key) {
    for (const auto& s : sections)
      if (key.rfind(s, 0) == 0) return true;
    return false;
  };
  std::map<std::string, std::string> a, b;
  for (const auto& [k, v] : have)
    if (in_scope(k)) a[k] = v;
  for (const auto& [k, v] : want)
    if (in_scope(k)) b[k] = v;
  std::vector<std::string> out;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end()) out.push_back(k + ": " + v + " -> (absent)");
    else if (it->second != v) out.push_back(k + ": " + v + " -> " + it->second);
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) out.push_back(k + ": (absent) -> " + v);
  return out;
}

void require_config_match(const ConfigEcho& have, const ConfigEcho& want, const std::vector<std::string>& sections) {
  const auto diff = config_diff(have, want, sections);
  if (diff.empty()) return;
  std::string msg = "checkpoint config differs from requested config:";
  for (const auto& line : diff) msg += "\n  " + line;
  fail(ErrorKind::compat, msg);
}

std::string params_hash(const nn::ParamStore& store) {
  Sha256 h;
  for (const auto& p : store.all()) {
    h.update(p.name);
    h.update(std::span<const double>(p.value.storage()));
  }
  return h.hex();
}

}  // namespace wsnad
