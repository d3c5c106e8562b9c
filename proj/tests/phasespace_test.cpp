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

#include "phasemotion/gradcheck.hpp"
#include "phasemotion/metrics.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/rng.hpp"

namespace pm = phasemotion;
using pm::Shape;
using pm::Tensor;

namespace {

pm::PoseSequence random_sequence(pm::Rng& rng, std::size_t frames, std::size_t joints,
                                 double range = 2000.0) {
  return pm::PoseSequence(pm::detail::random_tensor(rng, {frames, joints, 3}, -range, range));
}

}  // namespace

TEST(ToPhase, SingleJointSubtraction) {
  const pm::PoseSequence seq(Tensor(Shape{3, 1, 3}, std::vector<double>{0, 0, 0, 1, 0, 0, 3, 0, 0}));
  const pm::PhaseTrajectory ph = pm::to_phase(seq);
  EXPECT_EQ(ph.displacements, Tensor(Shape{2, 1, 3}, std::vector<double>{1, 0, 0, 2, 0, 0}));
  EXPECT_EQ(ph.positions, seq.positions);
}

TEST(ToPhase, ConstantPoseHasZeroDisplacement) {
  const pm::PoseSequence seq(Tensor(Shape{5, 2, 3}, 42.0));
  EXPECT_EQ(pm::to_phase(seq).displacements, Tensor(Shape{4, 2, 3}));
}

TEST(ToPhase, TooShort) {
  EXPECT_THROW(pm::to_phase(pm::PoseSequence(Tensor(Shape{1, 2, 3}))),
               pm::InsufficientLengthError);
}

TEST(ToPhase, CumulativeSumOracle) {
  pm::Rng rng(17);
  const pm::PoseSequence seq = random_sequence(rng, 10, 4);
  const pm::PhaseTrajectory ph = pm::to_phase(seq);
  for (std::size_t q = 0; q < 12; ++q) {
    double acc = seq.positions[q];
    for (std::size_t i = 0; i < 9; ++i) {
      acc += ph.displacements[i * 12 + q];
      EXPECT_NEAR(acc, seq.positions[(i + 1) * 12 + q], 1e-12 * 4000.0);
    }
  }
}

TEST(ToPhase, TranslationAndScaling) {
  pm::Rng rng(4);
  const pm::PoseSequence seq = random_sequence(rng, 6, 3, 100.0);
  const Tensor base = pm::to_phase(seq).displacements;
  Tensor shifted = seq.positions;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += (i % 3 == 0 ? 512.0 : -64.0);
  EXPECT_LE(pm::max_abs_diff(pm::to_phase(pm::PoseSequence(shifted)).displacements, base),
            2e-13);
  Tensor scaled = seq.positions;
  scaled *= 4.0;
  Tensor expect = base;
  expect *= 4.0;
  EXPECT_EQ(pm::to_phase(pm::PoseSequence(scaled)).displacements, expect);
}

TEST(Reconstruct, ZeroAndConstantDisplacement) {
  const Tensor last(Shape{1, 3}, std::vector<double>{0, 0, 0});
  const pm::PoseSequence still = pm::reconstruct(Tensor(Shape{1, 3}, 7.0), Tensor(Shape{4, 1, 3}));
  for (double v : still.positions.data()) EXPECT_EQ(v, 7.0);
  Tensor step(Shape{3, 1, 3});
  for (std::size_t i = 0; i < 3; ++i) step(i, 0, 0) = 1.0;
  const pm::PoseSequence walk = pm::reconstruct(last, step);
  EXPECT_EQ(walk.positions,
            Tensor(Shape{3, 1, 3}, std::vector<double>{1, 0, 0, 2, 0, 0, 3, 0, 0}));
}

TEST(Reconstruct, ShapeMismatch) {
  EXPECT_THROW(pm::reconstruct(Tensor(Shape{2, 3}), Tensor(Shape{4, 3, 3})), pm::DimensionError);
}

// to_phase rounds each difference, so reconstruct can at best return the
// rounded exact sum: |err| <= u * (sum |d| + |p|) per coordinate, u = 2^-53.
TEST(Reconstruct, RoundTripWithinRoundingBound) {
  pm::Rng rng(99);
  const double u = std::ldexp(1.0, -53);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t frames = 2 + rng.below(40), joints = 1 + rng.below(22);
    const pm::PoseSequence seq = random_sequence(rng, frames, joints, rng.uniform(1.0, 5000.0));
    const pm::PhaseTrajectory ph = pm::to_phase(seq);
    const pm::PoseSequence back = pm::reconstruct(seq.frame(0), ph.displacements);
    const std::size_t stride = joints * 3;
    for (std::size_t q = 0; q < stride; ++q) {
      double travelled = 0.0;
      for (std::size_t i = 0; i + 1 < frames; ++i) {
        travelled += std::abs(ph.displacements[i * stride + q]);
        const double truth = seq.positions[(i + 1) * stride + q];
        const double bound = 2.0 * u * (travelled + std::abs(truth));
        EXPECT_LE(std::abs(back.positions[i * stride + q] - truth), bound);
      }
    }
  }
}

TEST(Reconstruct, ExactWhenDifferencesAreExact) {
  pm::Rng rng(98);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t frames = 2 + rng.below(40), joints = 1 + rng.below(22);
    // Coordinates on a 2^-10 mm grid below 2^21 mm: every difference and
    // partial sum is representable.
    Tensor p(Shape{frames, joints, 3});
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = std::ldexp(std::round(rng.uniform(-2000.0, 2000.0) * 1024.0), -10);
    }
    const pm::PoseSequence seq(p);
    const pm::PoseSequence back = pm::reconstruct(seq.frame(0), pm::to_phase(seq).displacements);
    const pm::PoseSequence truth = seq.slice(1, frames - 1);
    EXPECT_EQ(back.positions, truth.positions);
    for (std::size_t f = 0; f + 1 < frames; ++f) EXPECT_EQ(pm::mpjpe(back, truth, f), 0.0);
  }
}

TEST(Reconstruct, ModerateScaleStaysBelowPicometre) {
  pm::Rng rng(97);
  for (int trial = 0; trial < 200; ++trial) {
    const pm::PoseSequence seq = random_sequence(rng, 2 + rng.below(40), 1 + rng.below(22), 100.0);
    const pm::PoseSequence back = pm::reconstruct(seq.frame(0), pm::to_phase(seq).displacements);
    EXPECT_LE(pm::max_abs_diff(back.positions, seq.slice(1, seq.frames() - 1).positions), 1e-12);
  }
}

TEST(FutureDisplacements, InverseOfReconstruct) {
  pm::Rng rng(8);
  const pm::PoseSequence seq = random_sequence(rng, 12, 5);
  const pm::PoseSequence future = seq.slice(2, 10);
  const Tensor d = pm::future_displacements(seq.frame(1), future);
  EXPECT_LE(pm::max_abs_diff(pm::reconstruct(seq.frame(1), d).positions, future.positions), 1e-12);
}

TEST(PoseSequence, SliceAndFrame) {
  pm::Rng rng(1);
  const pm::PoseSequence seq = random_sequence(rng, 5, 2);
  EXPECT_THROW(seq.slice(3, 3), pm::IndexError);
  EXPECT_EQ(seq.slice(2, 2).frame(1), seq.frame(3));
  EXPECT_THROW(pm::PoseSequence(Tensor(Shape{4, 3})), pm::DimensionError);
}
