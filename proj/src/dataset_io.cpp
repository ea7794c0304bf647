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

#include "wsnad/dataset_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "wsnad/hash.hpp"

namespace wsnad {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
  return r.ec == std::errc() && r.ptr == t.data() + t.size();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_f64_le(std::ostream& os, std::span<const double> values) {
  std::vector<char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

const char* split_name(int part) {
  static const char* names[] = {"train", "validation", "test"};
  return names[part];
}

}  // namespace

const AttributedGraphSample* Dataset::find(std::size_t id) const {
  for (const auto* part : {&split.train, &split.validation, &split.test})
    for (const auto& s : *part)
      if (s.id == id) return &s;
  return nullptr;
}

std::string save_dataset(const std::string& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir + ": " + ec.message());

  std::vector<const AttributedGraphSample*> all;
  std::vector<int> part_of;
  const std::vector<AttributedGraphSample>* parts[3] = {&ds.split.train, &ds.split.validation, &ds.split.test};
  for (int p = 0; p < 3; ++p)
    for (const auto& s : *parts[p]) {
      all.push_back(&s);
      part_of.push_back(p);
    }

  const std::string bin_path = (fs::path(dir) / "windows.bin").string();
  {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) fail(ErrorKind::io, "cannot write " + bin_path);
    for (const auto* s : all) write_f64_le(bin, s->window.x);
    if (!bin) fail(ErrorKind::io, "write failed for " + bin_path);
  }

  json m;
  m["format"] = "wsnad-dataset";
  m["version"] = 1;
  m["nodes"] = ds.nodes;
  m["modalities"] = ds.modalities;
  m["modality_names"] = ds.modality_names;
  m["window"] = ds.window;
  m["k"] = ds.k;
  m["interval"] = ds.interval;
  m["counts"] = {{"train", ds.split.train.size()},
                 {"validation", ds.split.validation.size()},
                 {"test", ds.split.test.size()}};
  json adj = json::array();
  for (std::size_t i = 0; i < ds.adjacency.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < ds.adjacency.cols(); ++j) row.push_back(static_cast<int>(ds.adjacency(i, j)));
    adj.push_back(row);
  }
  m["adjacency"] = adj;
  m["injected"] = ds.injected;
  json samples = json::array();
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto* s = all[i];
    json js;
    js["id"] = s->id;
    js["split"] = split_name(part_of[i]);
    js["origin_time"] = s->window.origin_time;
    js["phase"] = s->window.phase;
    js["grid_start"] = s->window.grid_start;
    js["stride"] = s->window.stride;
    js["labels"] = s->labels;
    js["truth"] = s->truth;
    samples.push_back(js);
  }
  m["samples"] = samples;
  m["data_sha256"] = sha256_file(bin_path);
  if (ds.injected) {
    std::string log;
    for (const auto& r : ds.injections) log += to_json_line(r) + "\n";
    write_text((fs::path(dir) / "injections.jsonl").string(), log);
    m["injections_sha256"] = sha256_hex(log);
  }
  const std::string text = m.dump(1) + "\n";
  write_text((fs::path(dir) / "manifest.json").string(), text);
  return sha256_hex(text);
}

std::string manifest_hash_of(const std::string& dir) {
  return sha256_hex(read_text((fs::path(dir) / "manifest.json").string()));
}

Dataset load_dataset(const std::string& dir, std::string* manifest_hash) {
  const std::string text = read_text((fs::path(dir) / "manifest.json").string());
  if (manifest_hash != nullptr) *manifest_hash = sha256_hex(text);
  Dataset ds;
  try {
    const json m = json::parse(text);
    if (m.at("format") != "wsnad-dataset") fail(ErrorKind::compat, dir + " is not a dataset directory");
    ds.nodes = m.at("nodes").get<std::size_t>();
    ds.modalities = m.at("modalities").get<std::size_t>();
    ds.modality_names = m.at("modality_names").get<std::vector<std::string>>();
    ds.window = m.at("window").get<std::size_t>();
    ds.k = m.at("k").get<std::size_t>();
    ds.interval = m.at("interval").get<double>();
    ds.injected = m.at("injected").get<bool>();
    ds.adjacency = Mat(ds.nodes, ds.nodes);
    const auto& adj = m.at("adjacency");
    for (std::size_t i = 0; i < ds.nodes; ++i)
      for (std::size_t j = 0; j < ds.nodes; ++j) ds.adjacency(i, j) = adj.at(i).at(j).get<double>();

    const std::string bin_path = (fs::path(dir) / "windows.bin").string();
    if (sha256_file(bin_path) != m.at("data_sha256").get<std::string>())
      fail(ErrorKind::compat, "windows.bin does not match the manifest hash");
    const std::string bin = read_text(bin_path);
    const std::size_t per = ds.nodes * ds.modalities * ds.window;
    const auto& samples = m.at("samples");
    if (bin.size() != samples.size() * per * 8) fail(ErrorKind::data, "windows.bin size does not match the manifest");
    std::size_t offset = 0;
    for (const auto& js : samples) {
      AttributedGraphSample s;
      s.id = js.at("id").get<std::size_t>();
      s.adjacency = ds.adjacency;
      s.window.nodes = ds.nodes;
      s.window.modalities = ds.modalities;
      s.window.window = ds.window;
      s.window.origin_time = js.at("origin_time").get<double>();
      s.window.phase = js.at("phase").get<std::size_t>();
      s.window.grid_start = js.at("grid_start").get<std::size_t>();
      s.window.stride = js.at("stride").get<std::size_t>();
      s.labels = js.at("labels").get<std::vector<int>>();
      s.truth = js.at("truth").get<std::vector<int>>();
      s.window.x.resize(per);
      for (std::size_t i = 0; i < per; ++i, ++offset) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bin[offset * 8 + b])) << (8 * b);
        s.window.x[i] = std::bit_cast<double>(bits);
      }
      const std::string part = js.at("split").get<std::string>();
      if (part == "train") ds.split.train.push_back(std::move(s));
      else if (part == "validation") ds.split.validation.push_back(std::move(s));
      else if (part == "test") ds.split.test.push_back(std::move(s));
      else fail(ErrorKind::data, "unknown split '" + part + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, "malformed manifest in " + dir + ": " + e.what());
  }
  if (ds.injected) {
    const std::string log = read_text((fs::path(dir) / "injections.jsonl").string());
    std::istringstream in(log);
    std::string line;
    while (std::getline(in, line))
      if (!trim(line).empty()) ds.injections.push_back(injection_from_json_line(line));
  }
  return ds;
}

std::vector<RawRecord> read_records_csv(const std::string& path, std::vector<std::string>* modality_names) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::data, path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || trim(header[0]) != "timestamp" || trim(header[1]) != "node_id")
    fail(ErrorKind::data, path + ":1: header must be timestamp,node_id,<modalities...>");
  const std::size_t M = header.size() - 2;
  if (modality_names != nullptr) {
    modality_names->clear();
    for (std::size_t i = 2; i < header.size(); ++i) modality_names->push_back(trim(header[i]));
  }
  std::vector<RawRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = path + ":" + std::to_string(lineno);
    if (cells.size() != M + 2)
      fail(ErrorKind::data, where + ": expected " + std::to_string(M + 2) + " fields, got " +
                                std::to_string(cells.size()));
    RawRecord r;
    double node = 0.0;
    if (!parse_double(cells[0], r.timestamp) || !std::isfinite(r.timestamp))
      fail(ErrorKind::data, where + ": bad timestamp '" + cells[0] + "'");
    if (!parse_double(cells[1], node) || node < 0.0 || node != std::floor(node))
      fail(ErrorKind::data, where + ": bad node_id '" + cells[1] + "'");
    r.node = static_cast<std::size_t>(node);
    r.values.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
      if (trim(cells[m + 2]).empty()) {
        r.values[m] = std::numeric_limits<double>::quiet_NaN();
      } else if (!parse_double(cells[m + 2], r.values[m])) {
        fail(ErrorKind::data, where + ": bad value '" + cells[m + 2] + "'");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_records_csv(const std::string& path, const std::vector<RawRecord>& records,
                       const std::vector<std::string>& modality_names) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << "timestamp,node_id";
  for (const auto& n : modality_names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << format_double(r.timestamp) << ',' << r.node;
    for (double v : r.values) {
      out << ',';
      if (std::isfinite(v)) out << format_double(v);
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

Mat read_positions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::size_t, std::pair<double, double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto c = split_csv_line(line);
    double id = 0, x = 0, y = 0;
    if (c.size() != 3 || !parse_double(c[0], id) || !parse_double(c[1], x) || !parse_double(c[2], y))
      fail(ErrorKind::data, path + ":" + std::to_string(lineno) + ": expected node_id,x,y");
    rows.push_back({static_cast<std::size_t>(id), {x, y}});
  }
  Mat p(rows.size(), 2);
  for (const auto& [id, xy] : rows) {
    if (id >= rows.size()) fail(ErrorKind::data, path + ": node ids must be 0..N-1");
    p(id, 0) = xy.first;
    p(id, 1) = xy.second;
  }
  return p;
}

void write_positions_csv(const std::string& path, const Mat& positions) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out << "node_id,x,y\n";
  for (std::size_t i = 0; i < positions.rows(); ++i)
    out << i << ',' << format_double(positions(i, 0)) << ',' << format_double(positions(i, 1)) << '\n';
}

Dataset preprocess_records(const std::vector<RawRecord>& records, const std::vector<std::string>& modality_names,
                           const Mat& positions, const PreprocessOptions& opt) {
  if (records.empty()) fail(ErrorKind::data, "no records");
  if (opt.k == 0) fail(ErrorKind::config, "k must be at least 1");
  if (opt.window < 2) fail(ErrorKind::config, "window must be at least 2");
  const std::size_t M = modality_names.size();
  const std::size_t N = positions.rows();
  double t0 = records.front().timestamp, t1 = t0;
  for (const auto& r : records) {
    t0 = std::min(t0, r.timestamp);
    t1 = std::max(t1, r.timestamp);
  }
  const AlignedSeries series = align_timestamps(records, N, M, opt.interval, t0, t1);
  Dataset ds;
  ds.nodes = N;
  ds.modalities = M;
  ds.modality_names = modality_names;
  ds.window = opt.window;
  ds.k = opt.k;
  ds.interval = opt.interval;
  ds.adjacency = build_adjacency(positions, opt.adjacency);
  std::vector<AttributedGraphSample> samples;
  const std::size_t seg = opt.k * opt.window;
  for (std::size_t start = 0; start + seg <= series.steps(); start += seg) {
    for (auto& w : downsample_windows(series, opt.k, opt.window, start)) {
      AttributedGraphSample s;
      s.id = samples.size();
      s.adjacency = ds.adjacency;
      s.window = zscore_normalize(w);
      s.labels.assign(N, kUnlabeled);
      s.truth.assign(N, 0);
      samples.push_back(std::move(s));
    }
  }
  ds.split = split_dataset(std::move(samples), opt.ratios[0], opt.ratios[1], opt.ratios[2]);
  return ds;
}

}  // namespace wsnad
