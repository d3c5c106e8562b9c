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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/skeleton.hpp"

namespace phasemotion {

struct MotionDataset {
  Skeleton skeleton;
  std::vector<PoseSequence> sequences;
  double fps = 25.0;
};

/// One (observed, future) training/evaluation sample cut from a sequence.
struct SampleWindow {
  PoseSequence observed;  // N+1 frames
  PoseSequence future;    // n frames, starting right after `observed`
  std::string source;
  std::size_t start = 0;
};

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    cells.push_back(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline double parse_number(std::string_view cell, std::size_t line, std::size_t column) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() ||
      !std::isfinite(v)) {
    throw ParseError("column " + std::to_string(column + 1) + ": '" + std::string(cell) +
                         "' is not a finite number",
                     line);
  }
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string csv_header(const Skeleton& s) {
  std::string h = "frame";
  for (const auto& j : s.joints()) h += "," + j.name + "_x," + j.name + "_y," + j.name + "_z";
  return h;
}

/// Reads one sequence. The header must be `frame` followed by x/y/z columns
/// of every skeleton joint in order; every row must carry 1 + 3J numbers.
inline PoseSequence load_csv(const std::string& path, const Skeleton& s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::size_t nj = s.joint_count();
  const std::size_t expected = 1 + 3 * nj;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("missing header in " + path, 1);
  ++lineno;
  const auto header = detail::split_csv(line);
  if (header.empty() || detail::trim(header[0]) != "frame") {
    throw ParseError("missing header: first column must be 'frame'", lineno);
  }
  if (header.size() != expected) {
    throw ParseError("header has " + std::to_string(header.size()) +
                         " columns, expected 1+3J = " + std::to_string(expected),
                     lineno);
  }
  static constexpr const char* kAxes[3] = {"_x", "_y", "_z"};
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::string want = s.joint_name(j) + kAxes[c];
      if (detail::trim(header[1 + 3 * j + c]) != want) {
        throw ParseError("header column " + std::to_string(2 + 3 * j + c) + " is '" +
                             std::string(detail::trim(header[1 + 3 * j + c])) +
                             "', expected '" + want + "'",
                         lineno);
      }
    }
  }
  std::vector<double> values;
  std::size_t frames = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != expected) {
      throw ParseError("row has " + std::to_string(cells.size()) +
                           " columns, expected 1+3J = " + std::to_string(expected),
                       lineno);
    }
    detail::parse_number(cells[0], lineno, 0);
    for (std::size_t q = 1; q < cells.size(); ++q) {
      values.push_back(detail::parse_number(cells[q], lineno, q));
    }
    ++frames;
  }
  const std::string label = std::filesystem::path(path).stem().string();
  return PoseSequence(Tensor(Shape{frames, nj, 3}, std::move(values)), label);
}

/// Writes with 17 significant digits so load_csv reproduces every value
/// bit-exactly.
inline void save_csv(const std::string& path, const PoseSequence& seq, const Skeleton& s) {
  if (seq.joints() != s.joint_count()) {
    throw DimensionError("save_csv: sequence has " + std::to_string(seq.joints()) +
                         " joints, skeleton has " + std::to_string(s.joint_count()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << csv_header(s) << '\n';
  const std::size_t stride = seq.joints() * 3;
  for (std::size_t f = 0; f < seq.frames(); ++f) {
    out << f;
    for (std::size_t q = 0; q < stride; ++q) {
      out << ',' << detail::format_double(seq.positions[f * stride + q]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

/// Every *.csv in `dir`, sorted by file name.
inline MotionDataset load_dataset(const std::string& dir, const Skeleton& s,
                                  double fps = 25.0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  MotionDataset ds{s, {}, fps};
  for (const auto& f : files) ds.sequences.push_back(load_csv(f.string(), s));
  return ds;
}

// ---------------------------------------------------------------------------
// Windowing

inline std::size_t window_count(std::size_t length, std::size_t span, std::size_t stride) {
  if (length < span) return 0;
  return (length - span) / stride + 1;
}

/// Sliding windows of `observed` + `horizon` contiguous frames.
inline std::vector<SampleWindow> make_windows(const std::vector<PoseSequence>& sequences,
                                              std::size_t observed, std::size_t horizon,
                                              std::size_t stride) {
  if (stride == 0) throw UsageError("make_windows: stride must be >= 1");
  if (observed < 2 || horizon < 1) {
    throw UsageError("make_windows: need observed >= 2 and horizon >= 1");
  }
  const std::size_t span = observed + horizon;
  std::vector<SampleWindow> windows;
  for (const auto& seq : sequences) {
    const std::size_t count = window_count(seq.frames(), span, stride);
    for (std::size_t w = 0; w < count; ++w) {
      const std::size_t start = w * stride;
      windows.push_back({seq.slice(start, observed), seq.slice(start + observed, horizon),
                         seq.label, start});
    }
  }
  if (windows.empty()) {
    throw InsufficientLengthError("empty dataset: no sequence has " + std::to_string(span) +
                                  " frames for observed+horizon");
  }
  return windows;
}

inline std::vector<SampleWindow> make_windows(const MotionDataset& ds, std::size_t observed,
                                              std::size_t horizon, std::size_t stride) {
  return make_windows(ds.sequences, observed, horizon, stride);
}

// ---------------------------------------------------------------------------
// Synthetic motion

enum class SynthKind { constant_velocity, sinusoid_limbs, circle };

inline SynthKind parse_synth_kind(std::string_view s) {
  if (s == "constant_velocity") return SynthKind::constant_velocity;
  if (s == "sinusoid_limbs") return SynthKind::sinusoid_limbs;
  if (s == "circle") return SynthKind::circle;
  throw UsageError("unknown synthetic kind '" + std::string(s) +
                   "' (expected constant_velocity, sinusoid_limbs or circle)");
}

inline std::string_view to_string(SynthKind k) {
  switch (k) {
    case SynthKind::constant_velocity: return "constant_velocity";
    case SynthKind::sinusoid_limbs: return "sinusoid_limbs";
    case SynthKind::circle: return "circle";
  }
  return "?";
}

/// Deterministic synthetic motion around the skeleton's rest pose.
///
///  - constant_velocity: every joint drifts with its own fixed velocity.
///  - sinusoid_limbs: limbs swing periodically; mirror limbs run half a
///    period apart and mirror each other's lateral (x) coordinate, so
///    x_left(t) = -x_right(t) for a mirror-symmetric rest pose.
///  - circle: the whole body translates rigidly along a circle in the x-z
///    plane at uniform angular speed.
inline PoseSequence synth(SynthKind kind, const Skeleton& s, std::size_t frames,
                          std::uint64_t seed) {
  const std::size_t nj = s.joint_count();
  const Tensor rest = s.rest_pose();
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));
  Tensor pos(Shape{frames, nj, 3});
  switch (kind) {
    case SynthKind::constant_velocity: {
      std::vector<double> start(nj * 3), vel(nj * 3);
      for (std::size_t q = 0; q < nj * 3; ++q) {
        start[q] = rest[q] + rng.uniform(-50.0, 50.0);
        vel[q] = rng.uniform(-5.0, 5.0);
      }
      for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t q = 0; q < nj * 3; ++q)
          pos[f * nj * 3 + q] = start[q] + double(f) * vel[q];
      break;
    }
    case SynthKind::sinusoid_limbs: {
      const double omega = 2.0 * std::numbers::pi * rng.uniform(0.5, 1.5) / 25.0;
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double swing = rng.uniform(30.0, 80.0);
      const double spread = rng.uniform(10.0, 30.0);
      const double lift = rng.uniform(10.0, 40.0);
      for (std::size_t f = 0; f < frames; ++f) {
        const double base = omega * double(f) + theta;
        for (std::size_t j = 0; j < nj; ++j) {
          const LimbTag tag = s.tag(j);
          double dx = 0.0, dy = 0.0, dz = 0.0;
          if (is_limb(tag)) {
            const bool arm = tag == LimbTag::left_arm || tag == LimbTag::right_arm;
            const bool left = tag == LimbTag::left_arm || tag == LimbTag::left_leg;
            // Arms swing opposite to the leg on the same side.
            double a = base + (arm ? std::numbers::pi : 0.0);
            if (!left) a += std::numbers::pi;
            const double reach = double(s.chain_depth(j) + 1);
            const double sn = std::sin(base + (arm ? std::numbers::pi : 0.0));
            dx = (left ? 1.0 : -1.0) * spread * reach * sn * sn;
            dy = lift * reach * std::cos(a);
            dz = swing * reach * std::sin(a);
          } else {
            dy = 10.0 * std::sin(2.0 * base);
          }
          pos(f, j, 0) = rest(j, 0) + dx;
          pos(f, j, 1) = rest(j, 1) + dy;
          pos(f, j, 2) = rest(j, 2) + dz;
        }
      }
      break;
    }
    case SynthKind::circle: {
      const double radius = rng.uniform(200.0, 500.0);
      const double omega = rng.uniform(0.02, 0.08);
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t f = 0; f < frames; ++f) {
        const double a = theta + omega * double(f);
        const double cx = radius * std::cos(a), cz = radius * std::sin(a);
        for (std::size_t j = 0; j < nj; ++j) {
          pos(f, j, 0) = rest(j, 0) + cx;
          pos(f, j, 1) = rest(j, 1);
          pos(f, j, 2) = rest(j, 2) + cz;
        }
      }
      break;
    }
  }
  return PoseSequence(std::move(pos), std::string(to_string(kind)) + "_" + std::to_string(seed));
}

}  // namespace phasemotion
