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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "json.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/predictor.hpp"
#include "phasemotion/refiner.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/skeleton.hpp"
#include "phasemotion/tape.hpp"

namespace phasemotion {

/// Everything needed to run the predictor and refiner end to end.
struct Model {
  ModelConfig config;
  Skeleton skeleton;
  RelationSet relations;
  ParamStore params;
};

inline Model make_model(const ModelConfig& cfg, Skeleton skeleton, std::uint64_t seed) {
  cfg.validate();
  RelationSet rel = build_relations(skeleton, cfg.relation_rules());
  Model m{cfg, std::move(skeleton), std::move(rel), {}};
  Rng rng(seed);
  init_predictor_params(m.params, cfg, m.skeleton, m.relations, rng);
  init_refiner_params(m.params, rng);
  return m;
}

struct ForwardOutput {
  Var coarse;   // ω̃, [n × J × 3] mm/frame
  Var refined;  // ω̂, equal to coarse when the implicit stage is off
  std::optional<Var> affinity;
};

inline ForwardOutput run_model(BoundParams& params, const Model& model,
                               const PhaseTrajectory& observed,
                               const DecodeOptions& opt = {},
                               const Tensor* teacher = nullptr) {
  const ModelConfig& cfg = model.config;
  Var coarse = predict_displacements(params, observed, model.skeleton, model.relations,
                                     cfg, opt, teacher);
  if (!cfg.use_implicit) return {coarse, coarse, std::nullopt};
  auto [gamma_t, phi_t] = project(params, scale(coarse, 1.0 / cfg.displacement_scale));
  Var a = affinity(gamma_t, phi_t, cfg.affinity_norm);
  return {coarse, refine(coarse, a), a};
}

struct Prediction {
  Tensor coarse;
  Tensor refined;
  std::optional<Tensor> affinity;
  PoseSequence poses;  // n future frames
};

/// Inference on an observed window of exactly `config.observed` frames.
inline Prediction predict(const Model& model, const PoseSequence& observed) {
  Tape tape;
  BoundParams params(tape, model.params);
  const PhaseTrajectory phase = to_phase(observed);
  const ForwardOutput out = run_model(params, model, phase);
  Prediction p;
  p.coarse = out.coarse.value();
  p.refined = out.refined.value();
  if (out.affinity) p.affinity = out.affinity->value();
  p.poses = reconstruct(observed.frame(observed.frames() - 1), p.refined);
  p.poses.label = observed.label;
  return p;
}

// ---------------------------------------------------------------------------
// Structured-text form of the configuration

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"channels", c.channels},
          {"dilations", c.dilations},
          {"kernel", c.kernel},
          {"hidden", c.hidden},
          {"observed", c.observed},
          {"horizon", c.horizon},
          {"position_scale", c.position_scale},
          {"displacement_scale", c.displacement_scale},
          {"explicit", c.use_explicit},
          {"implicit", c.use_implicit},
          {"displacement", c.use_displacement},
          {"relation_hops", c.relation_hops},
          {"affinity_norm", c.affinity_norm == AffinityNorm::rows ? "rows" : "columns"}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channels = j.value("channels", c.channels);
  c.dilations = j.value("dilations", c.dilations);
  c.kernel = j.value("kernel", c.kernel);
  c.hidden = j.value("hidden", c.hidden);
  c.observed = j.value("observed", c.observed);
  c.horizon = j.value("horizon", c.horizon);
  c.position_scale = j.value("position_scale", c.position_scale);
  c.displacement_scale = j.value("displacement_scale", c.displacement_scale);
  c.use_explicit = j.value("explicit", c.use_explicit);
  c.use_implicit = j.value("implicit", c.use_implicit);
  c.use_displacement = j.value("displacement", c.use_displacement);
  c.relation_hops = j.value("relation_hops", c.relation_hops);
  const std::string norm = j.value("affinity_norm", std::string("rows"));
  if (norm != "rows" && norm != "columns") {
    throw ConfigError("affinity_norm must be 'rows' or 'columns', got '" + norm + "'");
  }
  c.affinity_norm = norm == "rows" ? AffinityNorm::rows : AffinityNorm::columns;
  return c;
}

}  // namespace phasemotion
