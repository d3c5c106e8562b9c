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

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "phasemotion/error.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

/// Joint positions over time, [frames × J × 3] in millimetres.
struct PoseSequence {
  Tensor positions;
  std::string label;

  PoseSequence() = default;
  explicit PoseSequence(Tensor p, std::string l = {})
      : positions(std::move(p)), label(std::move(l)) {
    if (positions.rank() != 3 || positions.dim(2) != 3) {
      throw DimensionError("pose sequence must be [frames x joints x 3], got " +
                           shape_string(positions.shape()));
    }
  }

  std::size_t frames() const { return positions.dim(0); }
  std::size_t joints() const { return positions.dim(1); }

  /// Frames [first, first + count) as a new sequence.
  PoseSequence slice(std::size_t first, std::size_t count) const {
    if (first + count > frames()) {
      throw IndexError("slice [" + std::to_string(first) + ", " +
                       std::to_string(first + count) + ") exceeds " +
                       std::to_string(frames()) + " frames");
    }
    const std::size_t stride = joints() * 3;
    Tensor out(Shape{count, joints(), 3});
    const auto src = positions.data();
    std::copy(src.begin() + static_cast<long>(first * stride),
              src.begin() + static_cast<long>((first + count) * stride),
              out.data().begin());
    return PoseSequence(std::move(out), label);
  }

  /// Pose at one frame, [J × 3].
  Tensor frame(std::size_t f) const { return slice(f, 1).positions.reshaped({joints(), 3}); }
};

/// Positions plus adjacent-frame displacements (mm per frame).
struct PhaseTrajectory {
  Tensor positions;      // [F × J × 3]
  Tensor displacements;  // [(F-1) × J × 3], displacements[i] = positions[i+1] - positions[i]

  std::size_t frames() const { return positions.dim(0); }
  std::size_t joints() const { return positions.dim(1); }
};

inline PhaseTrajectory to_phase(const PoseSequence& seq) {
  const std::size_t f = seq.frames();
  if (f < 2) {
    throw InsufficientLengthError("to_phase needs at least 2 frames, got " +
                                  std::to_string(f));
  }
  const std::size_t stride = seq.joints() * 3;
  Tensor disp(Shape{f - 1, seq.joints(), 3});
  const auto& p = seq.positions;
  for (std::size_t i = 0; i + 1 < f; ++i) {
    for (std::size_t q = 0; q < stride; ++q) {
      disp[i * stride + q] = p[(i + 1) * stride + q] - p[i * stride + q];
    }
  }
  return PhaseTrajectory{seq.positions, std::move(disp)};
}

/// Accumulates chained displacements onto the last observed pose:
/// pose[i] = last_pose + Σ_{k ≤ i} displacements[k].
inline PoseSequence reconstruct(const Tensor& last_pose, const Tensor& displacements) {
  if (last_pose.rank() != 2 || last_pose.dim(1) != 3 || displacements.rank() != 3 ||
      displacements.dim(1) != last_pose.dim(0) || displacements.dim(2) != 3) {
    throw DimensionError("reconstruct: last pose " + shape_string(last_pose.shape()) +
                         " and displacements " + shape_string(displacements.shape()) +
                         " are inconsistent");
  }
  const std::size_t n = displacements.dim(0), stride = last_pose.size();
  Tensor out(displacements.shape());
  // Compensated (Neumaier) running sum: displacements produced by to_phase
  // telescope back onto the original positions.
  for (std::size_t q = 0; q < stride; ++q) {
    double acc = last_pose[q];
    double carry = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = displacements[i * stride + q];
      const double t = acc + d;
      carry += std::abs(acc) >= std::abs(d) ? (acc - t) + d : (d - t) + acc;
      acc = t;
      out[i * stride + q] = acc + carry;
    }
  }
  return PoseSequence(std::move(out));
}

/// Frame-wise displacements of `future` relative to the pose before it.
inline Tensor future_displacements(const Tensor& last_pose, const PoseSequence& future) {
  const std::size_t stride = last_pose.size();
  if (future.joints() * 3 != stride) {
    throw DimensionError("future_displacements: joint count mismatch");
  }
  Tensor out(future.positions.shape());
  const auto& p = future.positions;
  for (std::size_t i = 0; i < future.frames(); ++i) {
    for (std::size_t q = 0; q < stride; ++q) {
      const double prev = i == 0 ? last_pose[q] : p[(i - 1) * stride + q];
      out[i * stride + q] = p[i * stride + q] - prev;
    }
  }
  return out;
}

}  // namespace phasemotion
