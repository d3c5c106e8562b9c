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
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/ops.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/skeleton.hpp"
#include "phasemotion/tape.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

enum class AffinityNorm { rows, columns };

/// Architecture and pathway switches. Defaults follow the published setup:
/// dilations {1,2,3}, one feature channel per branch, 128 GRU units.
struct ModelConfig {
  std::size_t channels = 1;  // per branch
  std::vector<std::size_t> dilations{1, 2, 3};
  std::size_t kernel = 3;
  std::size_t hidden = 128;
  std::size_t observed = 10;  // N + 1 frames
  std::size_t horizon = 25;   // n frames
  // Fixed input/output normalisation, millimetres.
  double position_scale = 1000.0;
  double displacement_scale = 10.0;

  bool use_explicit = true;
  bool use_implicit = true;
  bool use_displacement = true;
  std::size_t relation_hops = 1;
  AffinityNorm affinity_norm = AffinityNorm::rows;

  std::size_t displacement_steps() const { return observed - 1; }
  std::size_t input_channels() const { return use_displacement ? 6 : 3; }
  std::size_t max_dilation() const {
    return dilations.empty() ? 0 : *std::max_element(dilations.begin(), dilations.end());
  }
  // Common valid length of all branches.
  std::size_t feature_steps() const {
    return displacement_steps() - (kernel - 1) * max_dilation();
  }
  std::size_t branch_channels() const { return channels * dilations.size(); }

  RelationRules relation_rules() const {
    if (!use_explicit) return RelationRules::singletons();
    RelationRules r;
    r.hops = relation_hops;
    return r;
  }

  void validate() const {
    if (dilations.empty()) throw ConfigError("dilations must be non-empty");
    for (std::size_t d : dilations) {
      if (d < 1) throw ConfigError("every dilation must be >= 1");
    }
    if (kernel < 1) throw ConfigError("kernel size must be >= 1");
    if (channels < 1) throw ConfigError("channels must be >= 1");
    if (hidden < 1) throw ConfigError("hidden size must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (observed < 2) throw ConfigError("observed frames must be >= 2");
    if ((kernel - 1) * max_dilation() >= displacement_steps()) {
      throw ConfigError("(kernel-1)*max(dilation) = " +
                        std::to_string((kernel - 1) * max_dilation()) +
                        " must be < observed-1 = " + std::to_string(displacement_steps()));
    }
    if (!(position_scale > 0) || !(displacement_scale > 0)) {
      throw ConfigError("normalisation scales must be positive");
    }
    if (!use_explicit && !use_implicit && !use_displacement) {
      throw ConfigError("at least one of explicit, implicit, displacement must be enabled");
    }
  }
};

using ParamStore = std::map<std::string, Tensor>;

/// Binds named parameters onto a tape on first use. Parameters never touched
/// by a forward pass get exactly zero gradient.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto src = store_.find(name);
    if (src == store_.end()) throw UsageError("unknown parameter '" + name + "'");
    Var v = tape_.variable(src->second);
    bound_.emplace(name, v);
    return v;
  }

  /// Gradients for every stored parameter (after tape.backward).
  ParamStore gradients() const {
    ParamStore g;
    for (const auto& [name, value] : store_) {
      auto it = bound_.find(name);
      g.emplace(name, it == bound_.end() ? Tensor(value.shape(), 0.0) : tape_.grad(it->second));
    }
    return g;
  }

  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::map<std::string, Var> bound_;
};

/// Parameter-sharing classes: joints with the same limb tag and |C(j)| share
/// one set of predictor weights.
inline std::vector<std::string> joint_classes(const Skeleton& s, const RelationSet& rel) {
  std::vector<std::string> cls(s.joint_count());
  for (std::size_t j = 0; j < s.joint_count(); ++j) {
    cls[j] = std::string(to_string(s.tag(j))) + ".c" + std::to_string(rel.cardinality(j));
  }
  return cls;
}

inline std::size_t gru_input_width(const ModelConfig& cfg, std::size_t related) {
  return std::max<std::size_t>(cfg.branch_channels() * related, 3);
}

namespace detail {

inline Tensor glorot(Rng& rng, Shape shape, double fan_in, double fan_out) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace detail

/// Fresh predictor weights for every joint class: uniform ±sqrt(6/(fan_in+fan_out))
/// for matrices, zeros for biases and tap offsets.
inline void init_predictor_params(ParamStore& store, const ModelConfig& cfg,
                                  const Skeleton& s, const RelationSet& rel, Rng& rng) {
  const auto cls = joint_classes(s, rel);
  std::map<std::string, std::size_t> related;  // class -> |C(j)|
  for (std::size_t j = 0; j < cls.size(); ++j) related.emplace(cls[j], rel.cardinality(j));
  const std::size_t m = cfg.channels, k = cfg.kernel, c_in = cfg.input_channels();
  const std::size_t h = cfg.hidden;
  for (const auto& [name, count] : related) {
    for (std::size_t b = 0; b < cfg.dilations.size(); ++b) {
      const std::string p = name + ".conv" + std::to_string(b);
      store[p + ".kernel"] = detail::glorot(rng, {m, c_in, k}, double(c_in * k), double(m * k));
      store[p + ".offset"] = Tensor(Shape{k}, 0.0);
    }
    const std::size_t d = gru_input_width(cfg, count);
    Tensor wi(Shape{3 * h, d}), wh(Shape{3 * h, h});
    for (std::size_t gate = 0; gate < 3; ++gate) {
      const Tensor a = detail::glorot(rng, {h, d}, double(d), double(h));
      std::copy(a.data().begin(), a.data().end(), wi.data().begin() + long(gate * h * d));
      const Tensor b = detail::glorot(rng, {h, h}, double(h), double(h));
      std::copy(b.data().begin(), b.data().end(), wh.data().begin() + long(gate * h * h));
    }
    store[name + ".gru.input"] = std::move(wi);
    store[name + ".gru.recurrent"] = std::move(wh);
    store[name + ".gru.bias"] = Tensor(Shape{3 * h}, 0.0);
    store[name + ".out.weight"] = detail::glorot(rng, {3, h}, double(h), 3.0);
    store[name + ".out.bias"] = Tensor(Shape{3}, 0.0);
  }
}

/// Keeps every tap inside the signal: offset i of a branch with dilation d
/// lives in [-i*d, (k-1-i)*d].
inline void clamp_offsets(ParamStore& store, const ModelConfig& cfg) {
  for (auto& [name, value] : store) {
    const auto pos = name.find(".conv");
    if (pos == std::string::npos || !name.ends_with(".offset")) continue;
    const std::size_t b = std::stoul(name.substr(pos + 5));
    const double d = double(cfg.dilations.at(b));
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double lo = -double(i) * d, hi = double(cfg.kernel - 1 - i) * d;
      value[i] = std::clamp(value[i], lo, hi);
    }
  }
}

/// Per-frame input signal of one joint, [channels × N]: column t holds the
/// position of observed frame t+1 and (unless disabled) the displacement
/// that led into it, both normalised.
inline Tensor joint_signal(const PhaseTrajectory& phase, std::size_t joint,
                           const ModelConfig& cfg) {
  const std::size_t steps = cfg.displacement_steps();
  if (phase.frames() != cfg.observed) {
    throw DimensionError("observed trajectory has " + std::to_string(phase.frames()) +
                         " frames, model expects " + std::to_string(cfg.observed));
  }
  Tensor sig(Shape{cfg.input_channels(), steps});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < 3; ++c) {
      sig(c, t) = phase.positions(t + 1, joint, c) / cfg.position_scale;
      if (cfg.use_displacement) {
        sig(3 + c, t) = phase.displacements(t, joint, c) / cfg.displacement_scale;
      }
    }
  }
  return sig;
}

/// Multi-scale features of joint j over its related joints:
/// [(branches·m) × |C(j)| × N'], every branch cropped to the N' most recent
/// steps.
inline Var encode_joint(BoundParams& params, const PhaseTrajectory& phase, std::size_t j,
                        const RelationSet& rel, const std::string& cls,
                        const ModelConfig& cfg) {
  Tape& tape = params.tape();
  const auto& related = rel.of(j);
  const std::size_t m = cfg.channels, nb = cfg.dilations.size();
  const std::size_t steps = cfg.displacement_steps();
  if ((cfg.kernel - 1) * cfg.max_dilation() >= steps) {
    throw ConfigError("observed window too short for the largest dilation");
  }
  const std::size_t out_steps = cfg.feature_steps();
  std::vector<Var> parts;
  std::vector<std::size_t> part_offset, part_len;
  std::size_t offset = 0;
  for (std::size_t r : related) {
    Var sig = tape.constant(joint_signal(phase, r, cfg));
    for (std::size_t b = 0; b < nb; ++b) {
      const std::string p = cls + ".conv" + std::to_string(b);
      Var y = dilated_conv1d(sig, params(p + ".kernel"), cfg.dilations[b], params(p + ".offset"));
      part_offset.push_back(offset);
      part_len.push_back(y.shape()[1]);
      offset += y.value().size();
      parts.push_back(y);
    }
  }
  Var flat = concat(parts);
  const std::size_t nr = related.size();
  std::vector<std::size_t> idx(nb * m * nr * out_steps);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t r = 0; r < nr; ++r) {
        const std::size_t part = r * nb + b;
        const std::size_t len = part_len[part];
        for (std::size_t t = 0; t < out_steps; ++t) {
          idx[((b * m + c) * nr + r) * out_steps + t] =
              part_offset[part] + c * len + (len - out_steps + t);
        }
      }
    }
  }
  return gather(flat, std::move(idx), Shape{nb * m, nr, out_steps});
}

struct DecodeOptions {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
  // Ground-truth normalised displacements [n × 3] fed back instead of the
  // model's own outputs (teacher forcing).
  const Tensor* teacher = nullptr;
};

namespace detail {

inline Var pad_to(Tape& tape, const Var& v, std::size_t width) {
  const std::size_t n = v.value().size();
  if (n == width) return v;
  return concat({v, tape.constant(Tensor(Shape{width - n}, 0.0))});
}

inline Var maybe_dropout(const Var& x, const DecodeOptions& opt) {
  if (!opt.training || opt.dropout <= 0.0) return x;
  if (!opt.rng) throw UsageError("dropout requires a random generator");
  Tensor mask(x.shape());
  const double keep = 1.0 - opt.dropout;
  for (double& v : mask.data()) v = opt.rng->uniform() < keep ? 1.0 / keep : 0.0;
  return mul_const(x, std::move(mask));
}

}  // namespace detail

/// Runs the GRU over the feature steps, then emits `horizon` displacement
/// vectors autoregressively. Returns [n × 3] in millimetres per frame.
inline Var decode_sequence(BoundParams& params, const Var& features,
                           const std::string& cls, const ModelConfig& cfg,
                           const DecodeOptions& opt = {}) {
  Tape& tape = params.tape();
  const Shape& fs = features.shape();
  if (fs.size() != 3) {
    throw DimensionError("decode_sequence: features must be rank 3, got " + shape_string(fs));
  }
  const std::size_t ch = fs[0], nr = fs[1], steps = fs[2];
  const std::size_t width = std::max<std::size_t>(ch * nr, 3);
  Var wi = params(cls + ".gru.input");
  Var wh = params(cls + ".gru.recurrent");
  Var bias = params(cls + ".gru.bias");
  Var ow = params(cls + ".out.weight");
  Var ob = params(cls + ".out.bias");
  if (wi.shape()[1] != width) {
    throw DimensionError("decode_sequence: feature width " + std::to_string(width) +
                         " does not match GRU input " + shape_string(wi.shape()));
  }
  Var h = tape.constant(Tensor(Shape{cfg.hidden}, 0.0));
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<std::size_t> idx(ch * nr);
    for (std::size_t q = 0; q < ch * nr; ++q) idx[q] = q * steps + t;
    Var x = gather(features, std::move(idx), Shape{ch * nr});
    x = detail::maybe_dropout(detail::pad_to(tape, x, width), opt);
    h = gru_cell(x, h, wi, wh, bias);
  }
  std::vector<Var> outputs;
  outputs.reserve(cfg.horizon);
  Var y = affine(h, ow, ob);
  outputs.push_back(y);
  for (std::size_t i = 1; i < cfg.horizon; ++i) {
    Var fed = y;
    if (opt.teacher) {
      Tensor row(Shape{3});
      for (std::size_t c = 0; c < 3; ++c) row[c] = (*opt.teacher)(i - 1, c);
      fed = tape.constant(std::move(row));
    }
    h = gru_cell(detail::pad_to(tape, fed, width), h, wi, wh, bias);
    y = affine(h, ow, ob);
    outputs.push_back(y);
  }
  return scale(reshape(concat(outputs), Shape{cfg.horizon, 3}), cfg.displacement_scale);
}

/// Pre-refinement displacement predictions ω̃ for every joint, [n × J × 3].
/// Joint j only reads trajectories of joints in C(j).
inline Var predict_displacements(BoundParams& params, const PhaseTrajectory& phase,
                                 const Skeleton& s, const RelationSet& rel,
                                 const ModelConfig& cfg, const DecodeOptions& opt = {},
                                 const Tensor* teacher_all = nullptr) {
  const std::size_t nj = s.joint_count();
  if (phase.joints() != nj || rel.joint_count() != nj) {
    throw DimensionError("joint counts of trajectory, skeleton and relations differ");
  }
  const auto cls = joint_classes(s, rel);
  std::vector<Var> per_joint;
  per_joint.reserve(nj);
  for (std::size_t j = 0; j < nj; ++j) {
    Var feat = encode_joint(params, phase, j, rel, cls[j], cfg);
    DecodeOptions o = opt;
    Tensor teacher;
    if (teacher_all) {
      teacher = Tensor(Shape{cfg.horizon, 3});
      for (std::size_t i = 0; i < cfg.horizon; ++i)
        for (std::size_t c = 0; c < 3; ++c)
          teacher(i, c) = (*teacher_all)(i, j, c) / cfg.displacement_scale;
      o.teacher = &teacher;
    }
    per_joint.push_back(decode_sequence(params, feat, cls[j], cfg, o));
  }
  const std::size_t n = cfg.horizon;
  std::vector<std::size_t> idx(n * nj * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t c = 0; c < 3; ++c) idx[(i * nj + j) * 3 + c] = (j * n + i) * 3 + c;
  return gather(concat(per_joint), std::move(idx), Shape{n, nj, 3});
}

}  // namespace phasemotion
