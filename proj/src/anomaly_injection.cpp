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

#include "wsnad/anomaly_injection.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "wsnad/random.hpp"

namespace wsnad {

namespace {

constexpr const char* kTypeNames[kAnomalyTypes] = {"point", "collective", "contextual", "intra_corr", "inter_corr"};

struct Stats {
  double mean = 0.0, sd = 0.0;
};

Stats stats(const SampleWindow& w, std::size_t n, std::size_t m) {
  Stats s;
  for (std::size_t t = 0; t < w.window; ++t) s.mean += w.at(n, m, t);
  s.mean /= static_cast<double>(w.window);
  for (std::size_t t = 0; t < w.window; ++t) s.sd += (w.at(n, m, t) - s.mean) * (w.at(n, m, t) - s.mean);
  s.sd = std::sqrt(s.sd / static_cast<double>(w.window));
  return s;
}

// Segment length in [lo·W, hi·W], at least 2 and at most W.
std::size_t segment_length(std::size_t window, double lo, double hi, Rng& rng) {
  const auto a = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(lo * static_cast<double>(window))));
  const auto b = std::max(a, static_cast<std::size_t>(std::floor(hi * static_cast<double>(window))));
  return std::min(window, a + rng.below(b - a + 1));
}

}  // namespace

const char* to_string(AnomalyType t) { return kTypeNames[static_cast<std::size_t>(t)]; }

AnomalyType anomaly_type_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kAnomalyTypes; ++i)
    if (s == kTypeNames[i]) return static_cast<AnomalyType>(i);
  fail(ErrorKind::config, "unknown anomaly type '" + s + "'");
}

void AnomalySpec::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(injection_rate)) fail(ErrorKind::config, "injection_rate must be in [0,1]");
  if (!unit(labeled_fraction)) fail(ErrorKind::config, "labeled_fraction must be in [0,1]");
  if (!(normal_per_anomalous >= 0.0)) fail(ErrorKind::config, "label ratio must be nonnegative");
  double sum = 0.0;
  for (double w : type_mix) {
    if (!(w >= 0.0)) fail(ErrorKind::config, "type_mix weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::config, "type_mix weights sum to " + std::to_string(sum));
  if (!(magnitude > 0.0) || !(shift_magnitude > 0.0)) fail(ErrorKind::config, "magnitudes must be positive");
}

InjectionRecord inject_one(SampleWindow& w, std::size_t node, AnomalyType type, const AnomalySpec& spec,
                           std::uint64_t seed) {
  Rng rng(seed);
  InjectionRecord rec;
  rec.node = node;
  rec.type = type;
  rec.seed = seed;
  rec.modality = rng.below(w.modalities);
  const std::size_t m = rec.modality, W = w.window;
  const Stats st = stats(w, node, m);
  const double sd = st.sd > 1e-12 ? st.sd : 1.0;
  switch (type) {
    case AnomalyType::point: {
      rec.start = rng.below(W);
      rec.length = 1;
      rec.magnitude = spec.magnitude;
      double& v = w.at(node, m, rec.start);
      // Push away from the mean so the deviation is at least magnitude·σ.
      const double sign = v >= st.mean ? 1.0 : -1.0;
      v += sign * spec.magnitude * sd;
      break;
    }
    case AnomalyType::collective: {
      rec.length = segment_length(W, 0.10, 0.25, rng);
      rec.start = rng.below(W - rec.length + 1);
      rec.magnitude = spec.shift_magnitude;
      const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
      for (std::size_t t = rec.start; t < rec.start + rec.length; ++t) w.at(node, m, t) += sign * spec.shift_magnitude * sd;
      break;
    }
    case AnomalyType::contextual: {
      rec.length = segment_length(W, 0.10, 0.25, rng);
      rec.start = rng.below(W - rec.length + 1);
      double lo = w.at(node, m, 0), hi = lo, local = 0.0;
      for (std::size_t t = 0; t < W; ++t) {
        lo = std::min(lo, w.at(node, m, t));
        hi = std::max(hi, w.at(node, m, t));
      }
      for (std::size_t t = rec.start; t < rec.start + rec.length; ++t) local += w.at(node, m, t);
      local /= static_cast<double>(rec.length);
      // A level seen elsewhere in the window, held where it does not belong.
      const double level = local > st.mean ? lo : hi;
      rec.magnitude = std::abs(level - local) / sd;
      for (std::size_t t = rec.start; t < rec.start + rec.length; ++t) w.at(node, m, t) = level;
      break;
    }
    case AnomalyType::intra_corr: {
      rec.length = segment_length(W, 0.25, 0.50, rng);
      rec.start = rng.below(W - rec.length + 1);
      double seg_mean = 0.0;
      for (std::size_t t = rec.start; t < rec.start + rec.length; ++t) seg_mean += w.at(node, m, t);
      seg_mean /= static_cast<double>(rec.length);
      // Reflection about the segment mean negates its correlation with every other modality.
      for (std::size_t t = rec.start; t < rec.start + rec.length; ++t)
        w.at(node, m, t) = 2.0 * seg_mean - w.at(node, m, t);
      rec.magnitude = 0.0;
      break;
    }
    case AnomalyType::inter_corr: {
      rec.length = segment_length(W, 0.25, 0.50, rng);
      rec.start = rng.below(W - rec.length + 1);
      for (std::size_t a = rec.start, b = rec.start + rec.length - 1; a < b; ++a, --b)
        std::swap(w.at(node, m, a), w.at(node, m, b));
      rec.magnitude = 0.0;
      break;
    }
  }
  return rec;
}

std::vector<InjectionRecord> inject_anomalies(DatasetSplit& split, const AnomalySpec& spec) {
  spec.validate();
  std::vector<AttributedGraphSample*> samples;
  for (auto* part : {&split.train, &split.validation, &split.test})
    for (auto& s : *part) samples.push_back(&s);
  struct Slot {
    AttributedGraphSample* sample;
    std::size_t node;
  };
  std::vector<Slot> slots;
  for (auto* s : samples) {
    s->labels.assign(s->window.nodes, kUnlabeled);
    s->truth.assign(s->window.nodes, 0);
    for (std::size_t n = 0; n < s->window.nodes; ++n) slots.push_back({s, n});
  }
  const std::size_t total = slots.size();
  const auto injected = static_cast<std::size_t>(std::llround(spec.injection_rate * static_cast<double>(total)));
  const auto labeled = static_cast<std::size_t>(std::llround(spec.labeled_fraction * static_cast<double>(total)));
  const auto labeled_anom =
      static_cast<std::size_t>(std::llround(static_cast<double>(labeled) / (1.0 + spec.normal_per_anomalous)));
  const std::size_t labeled_norm = labeled - labeled_anom;
  if (labeled_anom > injected)
    fail(ErrorKind::config, "label budget: " + std::to_string(labeled_anom) + " labelled anomalies requested but only " +
                                std::to_string(injected) + " injected");
  if (labeled_norm > total - injected) fail(ErrorKind::config, "label budget: not enough normal slots");

  Rng rng(derive_seed(spec.seed, 0x1a));
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<long>(injected));
  std::vector<std::size_t> clean(order.begin() + static_cast<long>(injected), order.end());
  std::sort(chosen.begin(), chosen.end());

  std::vector<double> mix(spec.type_mix.begin(), spec.type_mix.end());
  std::vector<InjectionRecord> log;
  for (std::size_t idx : chosen) {
    Slot& s = slots[idx];
    Rng type_rng(derive_seed(spec.seed, 0x2b, idx));
    const auto type = static_cast<AnomalyType>(type_rng.weighted(mix));
    InjectionRecord rec = inject_one(s.sample->window, s.node, type, spec, derive_seed(spec.seed, 0x3c, idx));
    rec.window_index = s.sample->id;
    s.sample->truth[s.node] = 1;
    log.push_back(rec);
  }

  Rng label_rng(derive_seed(spec.seed, 0x4d));
  std::vector<std::size_t> anom = chosen;
  label_rng.shuffle(anom);
  for (std::size_t i = 0; i < labeled_anom; ++i) slots[anom[i]].sample->labels[slots[anom[i]].node] = 1;
  label_rng.shuffle(clean);
  for (std::size_t i = 0; i < labeled_norm; ++i) slots[clean[i]].sample->labels[slots[clean[i]].node] = 0;
  return log;
}

std::string to_json_line(const InjectionRecord& r) {
  nlohmann::ordered_json j;
  j["window_index"] = r.window_index;
  j["node"] = r.node;
  j["modality"] = r.modality;
  j["type"] = to_string(r.type);
  j["start"] = r.start;
  j["length"] = r.length;
  j["magnitude"] = r.magnitude;
  j["seed"] = r.seed;
  return j.dump();
}

InjectionRecord injection_from_json_line(const std::string& line) {
  InjectionRecord r;
  try {
    const auto j = nlohmann::json::parse(line);
    r.window_index = j.at("window_index").get<std::size_t>();
    r.node = j.at("node").get<std::size_t>();
    r.modality = j.value("modality", std::size_t{0});
    r.type = anomaly_type_from_string(j.at("type").get<std::string>());
    r.start = j.at("start").get<std::size_t>();
    r.length = j.at("length").get<std::size_t>();
    r.magnitude = j.at("magnitude").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("bad injection record: ") + e.what());
  }
  return r;
}

}  // namespace wsnad
