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

#include <fstream>
#include <optional>
#include <string>
#include <utility>

#include "json.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/model.hpp"
#include "phasemotion/training.hpp"

namespace phasemotion {

inline constexpr const char* kCheckpointFormat = "phasemotion.checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json store_to_json(const ParamStore& store) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, t] : store) {
    out[name] = {{"shape", t.shape()}, {"data", t.values()}};
  }
  return out;
}

inline ParamStore store_from_json(const nlohmann::json& j) {
  ParamStore store;
  for (const auto& [name, e] : j.items()) {
    store.emplace(name, Tensor(e.at("shape").get<Shape>(), e.at("data").get<std::vector<double>>()));
  }
  return store;
}

}  // namespace detail

struct Checkpoint {
  Model model;
  std::optional<AdamState> optimizer;
};

/// Structured-text checkpoint: configuration, skeleton, every named parameter
/// tensor with its shape, and optionally the ADAM moments.
inline nlohmann::json checkpoint_to_json(const Model& model,
                                         const AdamState* optimizer = nullptr) {
  nlohmann::json doc;
  doc["format"] = kCheckpointFormat;
  doc["version"] = kCheckpointVersion;
  doc["config"] = to_json(model.config);
  doc["skeleton"] = to_json(model.skeleton);
  doc["params"] = detail::store_to_json(model.params);
  if (optimizer) {
    doc["optimizer"] = {{"step", optimizer->step},
                        {"first", detail::store_to_json(optimizer->first)},
                        {"second", detail::store_to_json(optimizer->second)}};
  }
  return doc;
}

inline void save_checkpoint(const std::string& path, const Model& model,
                            const AdamState* optimizer = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_to_json(model, optimizer).dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Rebuilds the model and checks every parameter against the shapes its
/// configuration implies.
inline Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != kCheckpointFormat) {
    throw ValidationError("not a phasemotion checkpoint");
  }
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " +
                          std::to_string(doc.value("version", 0)));
  }
  const ModelConfig cfg = model_config_from_json(doc.at("config"));
  Model model = make_model(cfg, skeleton_from_json(doc.at("skeleton")), 0);
  ParamStore loaded = detail::store_from_json(doc.at("params"));
  for (const auto& [name, expected] : model.params) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw ValidationError("checkpoint lacks parameter '" + name + "'");
    if (it->second.shape() != expected.shape()) {
      throw ValidationError("parameter '" + name + "' has shape " +
                            shape_string(it->second.shape()) + ", configuration implies " +
                            shape_string(expected.shape()));
    }
  }
  if (loaded.size() != model.params.size()) {
    for (const auto& [name, t] : loaded) {
      if (!model.params.contains(name)) {
        throw ValidationError("checkpoint has unexpected parameter '" + name + "'");
      }
    }
  }
  model.params = std::move(loaded);
  Checkpoint ck{std::move(model), std::nullopt};
  if (doc.contains("optimizer")) {
    const auto& o = doc["optimizer"];
    ck.optimizer = AdamState{o.at("step").get<std::uint64_t>(),
                             detail::store_from_json(o.at("first")),
                             detail::store_from_json(o.at("second"))};
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace phasemotion
