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

#include <cmath>

#include "phasemotion/eval.hpp"
#include "phasemotion/gradcheck.hpp"

namespace pm = phasemotion;
using pm::Shape;
using pm::Tensor;

namespace {

// Joint 0 moves (3,4,0) per frame, joint 1 moves (0,0,1).
pm::PoseSequence linear_pair(std::size_t frames) {
  Tensor p(Shape{frames, 2, 3});
  for (std::size_t f = 0; f < frames; ++f) {
    p(f, 0, 0) = 3.0 * double(f);
    p(f, 0, 1) = 4.0 * double(f);
    p(f, 1, 2) = double(f);
  }
  return pm::PoseSequence(p, "line_1");
}

pm::ModelConfig tiny() {
  pm::ModelConfig c;
  c.hidden = 6;
  c.observed = 8;
  c.kernel = 2;
  c.horizon = 10;
  return c;
}

}  // namespace

TEST(Mpjpe, ThreeFourFive) {
  const pm::PoseSequence pred(Tensor(Shape{1, 1, 3}, 0.0));
  const pm::PoseSequence truth(Tensor(Shape{1, 1, 3}, std::vector<double>{3, 4, 0}));
  EXPECT_EQ(pm::mpjpe(pred, truth, 0), 5.0);
}

TEST(Mpjpe, LoopOracle) {
  pm::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t f = 1 + rng.below(5), j = 1 + rng.below(9);
    const pm::PoseSequence a(pm::detail::random_tensor(rng, {f, j, 3}, -100, 100));
    const pm::PoseSequence b(pm::detail::random_tensor(rng, {f, j, 3}, -100, 100));
    for (std::size_t frame = 0; frame < f; ++frame) {
      double total = 0.0;
      for (std::size_t q = 0; q < j; ++q) {
        total += std::sqrt(std::pow(a.positions(frame, q, 0) - b.positions(frame, q, 0), 2) +
                           std::pow(a.positions(frame, q, 1) - b.positions(frame, q, 1), 2) +
                           std::pow(a.positions(frame, q, 2) - b.positions(frame, q, 2), 2));
      }
      EXPECT_NEAR(pm::mpjpe(a, b, frame), total / double(j), 1e-12);
      EXPECT_EQ(pm::mpjpe(a, b, frame), pm::mpjpe(b, a, frame));
    }
    EXPECT_EQ(pm::mpjpe(a, a, 0), 0.0);
  }
}

TEST(Mpjpe, Errors) {
  const pm::PoseSequence a(Tensor(Shape{2, 3, 3}, 0.0));
  const pm::PoseSequence b(Tensor(Shape{2, 4, 3}, 0.0));
  EXPECT_THROW(pm::mpjpe(a, b, 0), pm::DimensionError);
  EXPECT_THROW(pm::mpjpe(a, a, 2), pm::IndexError);
}

TEST(Horizons, FramesAtTwentyFiveFps) {
  EXPECT_EQ(pm::horizon_frames(pm::default_horizons_ms(), 25.0, 25),
            (std::vector<std::size_t>{2, 4, 8, 10, 14, 18, 25}));
  EXPECT_EQ(pm::horizon_frame(400, 50.0), 20u);
  EXPECT_THROW(pm::horizon_frames({1040}, 25.0, 25), pm::ConfigError);
  EXPECT_THROW(pm::horizon_frames({10}, 25.0, 25), pm::ConfigError);
}

TEST(Horizons, ActionNames) {
  EXPECT_EQ(pm::action_of("walking_12"), "walking");
  EXPECT_EQ(pm::action_of("walking"), "walking");
  EXPECT_EQ(pm::action_of("walk_dog_3"), "walk_dog");
  EXPECT_EQ(pm::action_of("walk_a"), "walk_a");
  EXPECT_EQ(pm::action_of("walk_"), "walk_");
}

TEST(Horizons, WindowAndActionAverages) {
  const pm::PoseSequence base = linear_pair(12);
  std::vector<pm::SampleWindow> windows;
  for (const char* src : {"walk_1", "walk_2", "run_1"}) {
    windows.push_back({base.slice(0, 2), base.slice(2, 10), src, 0});
  }
  const pm::WindowPredictor shifted = [](const pm::SampleWindow& w) {
    pm::PoseSequence p = w.future;
    const double d = pm::action_of(w.source) == "run" ? 4.0 : 1.0;
    for (std::size_t f = 0; f < p.frames(); ++f)
      for (std::size_t j = 0; j < p.joints(); ++j) p.positions(f, j, 1) += d;
    return p;
  };
  const pm::HorizonTable t = pm::horizon_report(shifted, windows, {80, 400}, 25.0, 10);
  EXPECT_EQ(t.windows, 3u);
  EXPECT_EQ(t.frames, (std::vector<std::size_t>{2, 10}));
  EXPECT_DOUBLE_EQ(t.at_ms(400), 2.0);
  EXPECT_DOUBLE_EQ(t.action_average[1], 2.5);
  EXPECT_DOUBLE_EQ(t.per_action.at("walk")[0], 1.0);
  EXPECT_DOUBLE_EQ(t.per_action.at("run")[0], 4.0);
  EXPECT_DOUBLE_EQ(t.average(), 2.0);
  EXPECT_THROW(t.at_ms(160), pm::IndexError);
  const auto j = pm::to_json(t);
  EXPECT_DOUBLE_EQ(j["average"]["400"].get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(j["average_over_actions"]["80"].get<double>(), 2.5);
  EXPECT_NE(pm::format_table(t).find("average (actions)"), std::string::npos);
  EXPECT_THROW(pm::horizon_report(shifted, {}, {80}, 25.0, 10), pm::UsageError);
}

TEST(Baselines, ZeroVelocityErrorGrowsLinearly) {
  const pm::PoseSequence seq = linear_pair(30);
  const pm::SampleWindow w{seq.slice(0, 5), seq.slice(5, 25), "line_1", 0};
  const pm::PoseSequence zv = pm::baseline(pm::BaselineKind::zero_velocity, w);
  ASSERT_EQ(zv.frames(), 25u);
  for (std::size_t f = 0; f < 25; ++f) {
    EXPECT_NEAR(pm::mpjpe(zv, w.future, f), 3.0 * double(f + 1), 1e-12);
  }
}

TEST(Baselines, ConstantVelocity) {
  const pm::Skeleton s = pm::toy_skeleton();
  const auto windows =
      pm::make_windows({pm::synth(pm::SynthKind::constant_velocity, s, 40, 5)}, 10, 25, 5);
  for (const auto& w : windows) {
    const pm::PoseSequence cv = pm::baseline(pm::BaselineKind::constant_velocity, w);
    for (std::size_t f = 0; f < 25; ++f) EXPECT_NEAR(pm::mpjpe(cv, w.future, f), 0.0, 1e-9);
  }
  const auto circ = pm::make_windows({pm::synth(pm::SynthKind::circle, s, 40, 5)}, 10, 25, 1);
  EXPECT_GT(pm::mpjpe(pm::baseline(pm::BaselineKind::constant_velocity, circ[0]),
                      circ[0].future, 24),
            1.0);
  EXPECT_THROW(pm::baseline(pm::BaselineKind::constant_velocity, linear_pair(1), 3),
               pm::InsufficientLengthError);
  EXPECT_EQ(pm::parse_baseline_kind("zero_velocity"), pm::BaselineKind::zero_velocity);
  EXPECT_THROW(pm::parse_baseline_kind("oracle"), pm::UsageError);
}

TEST(Ablation, Names) {
  const auto specs = pm::single_ablations();
  ASSERT_EQ(specs.size(), 4u);
  EXPECT_EQ(specs[0].name(), "E+I+D");
  EXPECT_EQ(specs[1].name(), "I+D");
  EXPECT_EQ(specs[2].name(), "E+D");
  EXPECT_EQ(specs[3].name(), "E+I");
  EXPECT_THROW((pm::AblationSpec{false, false, false}.validate()), pm::UsageError);
  pm::ModelConfig off;
  off.use_explicit = off.use_implicit = off.use_displacement = false;
  EXPECT_THROW(off.validate(), pm::ConfigError);
}

TEST(Ablation, ImplicitOffBypassesRefiner) {
  const pm::Skeleton s = pm::toy_skeleton();
  const pm::Model m = pm::make_model(pm::AblationSpec{true, false, true}.apply(tiny()), s, 1);
  const auto w = pm::make_windows({pm::synth(pm::SynthKind::sinusoid_limbs, s, 18, 1)}, 8, 10, 1);
  const pm::Prediction p = pm::predict(m, w[0].observed);
  EXPECT_EQ(p.refined, p.coarse);
  EXPECT_FALSE(p.affinity.has_value());
  pm::TrainConfig tc;
  const pm::SampleResult g = pm::sample_gradient(m, w[0], tc, false, nullptr);
  bool any_refiner = false;
  for (const auto& [name, t] : g.grads) {
    if (name.rfind("refiner.", 0) != 0) continue;
    any_refiner = true;
    for (double v : t.data()) EXPECT_EQ(v, 0.0) << name;
  }
  EXPECT_TRUE(any_refiner);

  const pm::Model full = pm::make_model(tiny(), s, 1);
  const pm::Prediction pf = pm::predict(full, w[0].observed);
  ASSERT_TRUE(pf.affinity.has_value());
  EXPECT_EQ(pf.affinity->shape(), (Shape{70, 70}));
}

TEST(Ablation, ExplicitOffGivesSingletons) {
  const pm::Model m =
      pm::make_model(pm::AblationSpec{false, true, true}.apply(tiny()), pm::toy_skeleton(), 2);
  for (std::size_t j = 0; j < 7; ++j) {
    EXPECT_EQ(m.relations.of(j), (std::vector<std::size_t>{j}));
  }
}

TEST(Ablation, RunsEveryVariantFromOneSeed) {
  const pm::Skeleton s = pm::toy_skeleton();
  std::vector<pm::PoseSequence> seqs;
  for (int i = 0; i < 3; ++i) seqs.push_back(pm::synth(pm::SynthKind::sinusoid_limbs, s, 20, i));
  const auto windows = pm::make_windows(seqs, 8, 10, 4);
  pm::TrainConfig tc;
  tc.epochs = 1;
  const auto res = pm::ablate(pm::single_ablations(), s, windows, windows, tiny(), tc, 25.0, 3,
                              {80, 400});
  ASSERT_EQ(res.size(), 4u);
  for (const auto& r : res) {
    EXPECT_EQ(r.log.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.table.at_ms(400))) << r.spec.name();
  }
  EXPECT_NE(res[0].table.at_ms(400), res[1].table.at_ms(400));
  EXPECT_THROW(pm::ablate({{false, false, false}}, s, windows, windows, tiny(), tc, 25.0, 3),
               pm::UsageError);
}
