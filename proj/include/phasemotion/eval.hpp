// Copyright 2026 The phasemotion Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "phasemotion/data.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/metrics.hpp"
#include "phasemotion/model.hpp"
#include "phasemotion/training.hpp"

namespace phasemotion {

/// MPJPE per horizon, averaged uniformly over windows (`mpjpe`) and, per
/// action, over that action's windows.
struct HorizonTable {
  std::vector<int> horizons_ms;
  std::vector<std::size_t> frames;  // 1-based prediction frame per horizon
  std::vector<double> mpjpe;
  std::map<std::string, std::vector<double>> per_action;
  std::vector<double> action_average;  // uniform over actions
  std::size_t windows = 0;

  double at_ms(int ms) const {
    for (std::size_t h = 0; h < horizons_ms.size(); ++h)
      if (horizons_ms[h] == ms) return mpjpe[h];
    throw IndexError("horizon " + std::to_string(ms) + " ms not in table");
  }
  double average() const {
    double s = 0.0;
    for (double v : mpjpe) s += v;
    return mpjpe.empty() ? 0.0 : s / double(mpjpe.size());
  }
};

/// Action name of a sequence label: the label without a trailing `_<digits>`.
inline std::string action_of(std::string_view label) {
  const auto us = label.rfind('_');
  if (us == std::string_view::npos || us + 1 == label.size()) return std::string(label);
  for (std::size_t i = us + 1; i < label.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(label[i]))) return std::string(label);
  }
  return std::string(label.substr(0, us));
}

inline std::vector<std::size_t> horizon_frames(const std::vector<int>& horizons_ms, double fps,
                                               std::size_t horizon) {
  std::vector<std::size_t> frames;
  for (int ms : horizons_ms) {
    const std::size_t f = horizon_frame(ms, fps);
    if (f < 1 || f > horizon) {
      throw ConfigError("horizon " + std::to_string(ms) + " ms maps to frame " +
                        std::to_string(f) + ", outside the predicted 1.." +
                        std::to_string(horizon));
    }
    frames.push_back(f);
  }
  return frames;
}

using WindowPredictor = std::function<PoseSequence(const SampleWindow&)>;

inline HorizonTable horizon_report(const WindowPredictor& predictor,
                                   const std::vector<SampleWindow>& windows,
                                   const std::vector<int>& horizons_ms, double fps,
                                   std::size_t horizon) {
  if (windows.empty()) throw UsageError("horizon_report: no windows");
  HorizonTable table;
  table.horizons_ms = horizons_ms;
  table.frames = horizon_frames(horizons_ms, fps, horizon);
  table.windows = windows.size();
  const std::size_t nh = horizons_ms.size();
  std::vector<double> total(nh, 0.0);
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> actions;
  for (const auto& w : windows) {
    const PoseSequence pred = predictor(w);
    auto& [sums, count] = actions[action_of(w.source)];
    if (sums.empty()) sums.assign(nh, 0.0);
    ++count;
    for (std::size_t h = 0; h < nh; ++h) {
      const double e = mpjpe(pred, w.future, table.frames[h] - 1);
      total[h] += e;
      sums[h] += e;
    }
  }
  table.mpjpe.resize(nh);
  table.action_average.assign(nh, 0.0);
  for (std::size_t h = 0; h < nh; ++h) table.mpjpe[h] = total[h] / double(windows.size());
  for (auto& [name, entry] : actions) {
    auto& [sums, count] = entry;
    for (std::size_t h = 0; h < nh; ++h) {
      sums[h] /= double(count);
      table.action_average[h] += sums[h] / double(actions.size());
    }
    table.per_action.emplace(name, sums);
  }
  return table;
}

inline HorizonTable horizon_report(const Model& model, const std::vector<SampleWindow>& windows,
                                   double fps,
                                   const std::vector<int>& horizons_ms = default_horizons_ms()) {
  return horizon_report([&model](const SampleWindow& w) { return predict(model, w.observed).poses; },
                        windows, horizons_ms, fps, model.config.horizon);
}

// ---------------------------------------------------------------------------
// Reference predictors

enum class BaselineKind { zero_velocity, constant_velocity };

inline BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "zero_velocity") return BaselineKind::zero_velocity;
  if (s == "constant_velocity") return BaselineKind::constant_velocity;
  throw UsageError("unknown baseline '" + std::string(s) + "'");
}

inline PoseSequence baseline(BaselineKind kind, const PoseSequence& observed,
                             std::size_t horizon) {
  const std::size_t need = kind == BaselineKind::zero_velocity ? 1 : 2;
  if (observed.frames() < need) {
    throw InsufficientLengthError("baseline needs " + std::to_string(need) +
                                  " observed frames, got " + std::to_string(observed.frames()));
  }
  const Tensor last = observed.frame(observed.frames() - 1);
  Tensor disp(Shape{horizon, observed.joints(), 3}, 0.0);
  if (kind == BaselineKind::constant_velocity) {
    const Tensor prev = observed.frame(observed.frames() - 2);
    for (std::size_t i = 0; i < horizon; ++i)
      for (std::size_t q = 0; q < last.size(); ++q) disp[i * last.size() + q] = last[q] - prev[q];
  }
  PoseSequence out = reconstruct(last, disp);
  out.label = observed.label;
  return out;
}

inline PoseSequence baseline(BaselineKind kind, const SampleWindow& w) {
  return baseline(kind, w.observed, w.future.frames());
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_table(const HorizonTable& t, const std::string& title = "MPJPE (mm)") {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-24s", title.c_str());
  out += buf;
  for (int ms : t.horizons_ms) {
    std::snprintf(buf, sizeof buf, "%9d", ms);
    out += buf;
  }
  out += "\n";
  auto row = [&](const std::string& name, const std::vector<double>& v) {
    std::snprintf(buf, sizeof buf, "%-24s", name.c_str());
    out += buf;
    for (double x : v) {
      std::snprintf(buf, sizeof buf, "%9.2f", x);
      out += buf;
    }
    out += "\n";
  };
  for (const auto& [name, v] : t.per_action) row(name, v);
  row("average (windows)", t.mpjpe);
  row("average (actions)", t.action_average);
  return out;
}

/// action → horizon (ms, as string) → mpjpe_mm, plus the two averages.
inline nlohmann::json to_json(const HorizonTable& t) {
  auto by_horizon = [&](const std::vector<double>& v) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t h = 0; h < t.horizons_ms.size(); ++h) j[std::to_string(t.horizons_ms[h])] = v[h];
    return j;
  };
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [name, v] : t.per_action) doc[name] = by_horizon(v);
  doc["average"] = by_horizon(t.mpjpe);
  doc["average_over_actions"] = by_horizon(t.action_average);
  return doc;
}

// ---------------------------------------------------------------------------
// Ablations

/// Pathway switches: explicit relations (E), implicit refinement (I),
/// displacement inputs (D).
struct AblationSpec {
  bool use_explicit = true;
  bool use_implicit = true;
  bool use_displacement = true;

  void validate() const {
    if (!use_explicit && !use_implicit && !use_displacement) {
      throw UsageError("ablation disables every pathway (E, I and D)");
    }
  }
  std::string name() const {
    std::string s;
    auto add = [&s](bool on, const char* tag) {
      if (!on) return;
      if (!s.empty()) s += "+";
      s += tag;
    };
    add(use_explicit, "E");
    add(use_implicit, "I");
    add(use_displacement, "D");
    return s;
  }
  ModelConfig apply(ModelConfig cfg) const {
    cfg.use_explicit = use_explicit;
    cfg.use_implicit = use_implicit;
    cfg.use_displacement = use_displacement;
    return cfg;
  }
};

/// Full model followed by each single-pathway removal.
inline std::vector<AblationSpec> single_ablations() {
  return {{true, true, true}, {false, true, true}, {true, false, true}, {true, true, false}};
}

struct AblationResult {
  AblationSpec spec;
  HorizonTable table;
  std::vector<EpochRecord> log;
};

/// Trains and evaluates each variant from the same initialisation seed and
/// training seed.
inline std::vector<AblationResult> ablate(const std::vector<AblationSpec>& specs,
                                          const Skeleton& skeleton,
                                          const std::vector<SampleWindow>& train_set,
                                          const std::vector<SampleWindow>& test_set,
                                          const ModelConfig& base, const TrainConfig& tc,
                                          double fps, std::uint64_t init_seed,
                                          const std::vector<int>& horizons_ms = default_horizons_ms()) {
  std::vector<AblationResult> results;
  for (const auto& spec : specs) {
    spec.validate();
    Model model = make_model(spec.apply(base), skeleton, init_seed);
    TrainResult tr = train(model, train_set, {}, tc, fps);
    results.push_back({spec, horizon_report(model, test_set, fps, horizons_ms), std::move(tr.log)});
  }
  return results;
}

}  // namespace phasemotion
