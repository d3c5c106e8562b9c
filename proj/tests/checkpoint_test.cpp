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


#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "phasemotion/checkpoint.hpp"

namespace pm = phasemotion;
namespace fs = std::filesystem;

namespace {

std::string temp_file(const std::string& name) {
  return (fs::temp_directory_path() / ("pm_ckpt_" + name)).string();
}

pm::Model sample_model(std::uint64_t seed) {
  pm::ModelConfig c;
  c.hidden = 5;
  c.observed = 8;
  c.kernel = 2;
  c.horizon = 6;
  c.channels = 2;
  c.affinity_norm = pm::AffinityNorm::columns;
  return pm::make_model(c, pm::toy_skeleton(), seed);
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const pm::Model m = sample_model(4);
  const std::string path = temp_file("roundtrip.json");
  pm::save_checkpoint(path, m);
  const pm::Checkpoint ck = pm::load_checkpoint(path);
  EXPECT_EQ(ck.model.params, m.params);
  EXPECT_EQ(pm::to_json(ck.model.config), pm::to_json(m.config));
  EXPECT_EQ(pm::to_json(ck.model.skeleton), pm::to_json(m.skeleton));
  EXPECT_EQ(ck.model.relations, m.relations);
  EXPECT_FALSE(ck.optimizer.has_value());
  const auto obs = pm::synth(pm::SynthKind::circle, m.skeleton, 8, 1);
  EXPECT_EQ(pm::predict(ck.model, obs).refined, pm::predict(m, obs).refined);
  fs::remove(path);
}

TEST(Checkpoint, OptimizerStateSurvives) {
  const pm::Model m = sample_model(5);
  pm::AdamState st;
  st.step = 42;
  for (const auto& [name, p] : m.params) {
    pm::Tensor half = p, sq = p;
    half *= 0.5;
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = p[i] * p[i];
    st.first.emplace(name, half);
    st.second.emplace(name, sq);
  }
  const pm::Checkpoint ck = pm::checkpoint_from_json(pm::checkpoint_to_json(m, &st));
  ASSERT_TRUE(ck.optimizer.has_value());
  EXPECT_EQ(ck.optimizer->step, 42u);
  EXPECT_EQ(ck.optimizer->first, st.first);
  EXPECT_EQ(ck.optimizer->second, st.second);
}

TEST(Checkpoint, RejectsShapeMismatch) {
  const pm::Model m = sample_model(6);
  nlohmann::json doc = pm::checkpoint_to_json(m);
  doc["config"]["hidden"] = 7;
  try {
    pm::checkpoint_from_json(doc);
    FAIL() << "expected ValidationError";
  } catch (const pm::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("configuration implies"), std::string::npos);
  }
}

TEST(Checkpoint, RejectsMissingAndExtraParameters) {
  const pm::Model m = sample_model(7);
  nlohmann::json doc = pm::checkpoint_to_json(m);
  nlohmann::json extra = doc;
  extra["params"]["refiner.extra"] = extra["params"]["refiner.phi.bias"];
  EXPECT_THROW(pm::checkpoint_from_json(extra), pm::ValidationError);
  doc["params"].erase("refiner.phi.bias");
  EXPECT_THROW(pm::checkpoint_from_json(doc), pm::ValidationError);
}

TEST(Checkpoint, RejectsForeignDocuments) {
  const pm::Model m = sample_model(8);
  nlohmann::json doc = pm::checkpoint_to_json(m);
  doc["format"] = "other";
  EXPECT_THROW(pm::checkpoint_from_json(doc), pm::ValidationError);
  doc = pm::checkpoint_to_json(m);
  doc["version"] = 99;
  EXPECT_THROW(pm::checkpoint_from_json(doc), pm::ValidationError);
  const std::string path = temp_file("corrupt.json");
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(pm::load_checkpoint(path), pm::ValidationError);
  fs::remove(path);
  EXPECT_THROW(pm::load_checkpoint(temp_file("absent.json")), std::runtime_error);
}
