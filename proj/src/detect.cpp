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

#include "wsnad/detect.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "json.hpp"

namespace wsnad {

namespace {

std::vector<const AttributedGraphSample*> all_samples(const Dataset& ds) {
  std::vector<const AttributedGraphSample*> out;
  for (const auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test})
    for (const auto& s : *part) out.push_back(&s);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

}  // namespace

std::vector<StreamDetection> detect_stream(const DetectorModel& model, const Dataset& ds,
                                           const StreamDetectOptions& opt) {
  const std::size_t W = model.cfg.backbone.window;
  if (opt.window < W)
    fail(ErrorKind::config, "detection window " + std::to_string(opt.window) + " is shorter than the model window " +
                                std::to_string(W));
  if (opt.stride == 0) fail(ErrorKind::config, "stride must be at least 1");
  const auto samples = all_samples(ds);
  if (samples.empty()) return {};
  if (ds.window != W || ds.modalities != model.cfg.backbone.modalities)
    fail(ErrorKind::compat, "dataset shape (M=" + std::to_string(ds.modalities) + ", W=" + std::to_string(ds.window) +
                                ") does not match the model");

  std::map<std::size_t, std::vector<const AttributedGraphSample*>> streams;
  for (const auto* s : samples) streams[s->window.phase].push_back(s);
  struct Job {
    std::vector<const AttributedGraphSample*> span;  // oldest first, last one is scored
  };
  std::vector<Job> jobs;
  for (auto& [phase, list] : streams) {
    std::sort(list.begin(), list.end(),
              [](auto* a, auto* b) { return a->window.grid_start < b->window.grid_start; });
    for (std::size_t i = 0; i < list.size(); i += opt.stride) {
      Job job;
      std::size_t steps = W;
      job.span.push_back(list[i]);
      for (std::size_t j = i; j > 0 && steps < opt.window; --j) {
        const auto& a = list[j - 1]->window;
        const auto& b = list[j]->window;
        if (a.grid_start + a.stride * a.window != b.grid_start) break;  // gap in the stream
        job.span.insert(job.span.begin(), list[j - 1]);
        steps += W;
      }
      jobs.push_back(std::move(job));
    }
  }
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.span.back()->id < b.span.back()->id; });

  const std::size_t N = ds.nodes, M = ds.modalities;
  std::vector<Mat> emb(jobs.size());
  std::vector<std::size_t> streamed(jobs.size());
  nn::parallel_for(jobs.size(), opt.threads, [&](std::size_t j) {
    const auto& span = jobs[j].span;
    StreamHandle h = model.backbone.stream(span.back()->adjacency);
    // The window need not be a multiple of W: start part-way into the first sample.
    const std::size_t total = std::min(opt.window, span.size() * W);
    std::size_t skip = span.size() * W - total;
    Mat x(N, M);
    for (const auto* s : span)
      for (std::size_t t = 0; t < W; ++t) {
        if (skip > 0) {
          --skip;
          continue;
        }
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t m = 0; m < M; ++m) x(n, m) = s->window.at(n, m, t);
        h.push(x);
      }
    emb[j] = h.embedding();
    streamed[j] = total;
  });

  Mat all(jobs.size() * N, model.backbone.config().gat_out);
  for (std::size_t j = 0; j < jobs.size(); ++j)
    std::copy(emb[j].storage().begin(), emb[j].storage().end(), all.data() + j * N * all.cols());
  const auto decisions = classify_embeddings(model.discriminator, model.support, all, opt.threads);
  std::vector<StreamDetection> out;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t n = 0; n < N; ++n) {
      const auto& d = decisions[j * N + n];
      out.push_back({jobs[j].span.back()->id, n, d.score, d.label, 0.5, streamed[j]});
    }
  return out;
}

std::string to_json_line(const StreamDetection& d) {
  nlohmann::ordered_json j;
  j["sample_id"] = d.sample_id;
  j["node_id"] = d.node;
  j["score"] = d.score;
  j["label"] = d.label;
  j["threshold"] = d.threshold;
  j["steps"] = d.steps;
  return j.dump();
}

StreamDetection stream_detection_from_json_line(const std::string& line) {
  StreamDetection d;
  try {
    const auto j = nlohmann::json::parse(line);
    d.sample_id = j.at("sample_id").get<std::size_t>();
    d.node = j.at("node_id").get<std::size_t>();
    d.score = j.at("score").get<double>();
    d.label = j.at("label").get<int>();
    d.threshold = j.value("threshold", 0.5);
    d.steps = j.value("steps", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("bad detection record: ") + e.what());
  }
  return d;
}

void write_plot_csv(std::ostream& out, const Dataset& ds, std::size_t node,
                    const std::vector<StreamDetection>& detections) {
  if (node >= ds.nodes)
    fail(ErrorKind::config, "node " + std::to_string(node) + " out of range (dataset has " +
                                std::to_string(ds.nodes) + " nodes)");
  std::map<std::size_t, int> predicted;
  for (const auto& d : detections)
    if (d.node == node) predicted[d.sample_id] = std::max(predicted[d.sample_id], d.label);
  std::map<std::size_t, std::vector<const InjectionRecord*>> injected;
  for (const auto& r : ds.injections)
    if (r.node == node) injected[r.window_index].push_back(&r);

  out << "sample_id,step,time";
  for (std::size_t m = 0; m < ds.modalities; ++m)
    out << ',' << (m < ds.modality_names.size() ? ds.modality_names[m] : "m" + std::to_string(m));
  out << ",truth_label,predicted_label\n";
  out.precision(17);
  for (const auto* s : all_samples(ds)) {
    const auto& w = s->window;
    const auto inj = injected.find(s->id);
    const auto pred = predicted.find(s->id);
    for (std::size_t t = 0; t < w.window; ++t) {
      int truth = 0;
      if (inj != injected.end())
        for (const auto* r : inj->second)
          if (t >= r->start && t < r->start + r->length) truth = 1;
      out << s->id << ',' << t << ',' << w.origin_time + static_cast<double>(w.phase + t * w.stride) * ds.interval;
      for (std::size_t m = 0; m < w.modalities; ++m) out << ',' << w.at(node, m, t);
      out << ',' << truth << ',' << (pred != predicted.end() ? pred->second : 0) << '\n';
    }
  }
}

}  // namespace wsnad
