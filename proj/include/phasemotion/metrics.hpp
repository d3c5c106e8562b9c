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
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/phasespace.hpp"

namespace phasemotion {

/// Mean over joints of the Euclidean distance at one frame, millimetres.
inline double mpjpe(const PoseSequence& pred, const PoseSequence& truth, std::size_t frame) {
  if (pred.joints() != truth.joints()) {
    throw DimensionError("mpjpe: " + std::to_string(pred.joints()) + " vs " +
                         std::to_string(truth.joints()) + " joints");
  }
  if (frame >= pred.frames() || frame >= truth.frames()) {
    throw IndexError("mpjpe: frame " + std::to_string(frame) + " outside sequences of " +
                     std::to_string(pred.frames()) + " and " +
                     std::to_string(truth.frames()) + " frames");
  }
  const std::size_t nj = pred.joints();
  const double* p = pred.positions.data().data() + frame * nj * 3;
  const double* t = truth.positions.data().data() + frame * nj * 3;
  double total = 0.0;
  for (std::size_t j = 0; j < nj; ++j) {
    const double dx = p[3 * j] - t[3 * j];
    const double dy = p[3 * j + 1] - t[3 * j + 1];
    const double dz = p[3 * j + 2] - t[3 * j + 2];
    total += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return total / double(nj);
}

/// 1-based prediction frame reached after `ms` milliseconds.
inline std::size_t horizon_frame(double ms, double fps) {
  return static_cast<std::size_t>(std::lround(ms * fps / 1000.0));
}

inline const std::vector<int>& default_horizons_ms() {
  static const std::vector<int> h{80, 160, 320, 400, 560, 720, 1000};
  return h;
}

}  // namespace phasemotion
