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
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "phasemotion/data.hpp"
#include "phasemotion/error.hpp"
#include "phasemotion/metrics.hpp"
#include "phasemotion/model.hpp"
#include "phasemotion/ops.hpp"
#include "phasemotion/phasespace.hpp"
#include "phasemotion/rng.hpp"

namespace phasemotion {

struct TrainConfig {
  std::size_t batch_size = 16;
  double learning_rate = 0.001;
  double dropout = 0.05;
  double clip_threshold = 5.0;
  std::size_t epochs = 50;
  double temporal_decay = 0.95;
  double motion_epsilon = 1e-6;
  std::uint64_t seed = 0;
  bool teacher_forcing = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate >= 0)) throw ConfigError("learning rate must be >= 0");
    if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(clip_threshold > 0)) throw ConfigError("clip threshold must be positive");
    if (!(temporal_decay > 0 && temporal_decay <= 1)) {
      throw ConfigError("temporal decay must lie in (0, 1]");
    }
    if (!(motion_epsilon > 0)) throw ConfigError("motion epsilon must be positive");
  }
};

// ---------------------------------------------------------------------------
// Loss

/// Per (future frame, joint) weights [n × J], normalised to mean 1.
struct LossWeights {
  Tensor w;
};

/// Joint factor 1 + r_j / (mean r + ε), with r_j the summed displacement
/// magnitude over the observed frames, times the temporal factor τ^i for the
/// i-th predicted frame (0-based). Returned before normalisation.
inline Tensor raw_loss_weights(const PhaseTrajectory& observed, std::size_t horizon,
                               const TrainConfig& cfg) {
  if (observed.displacements.rank() != 3 || observed.displacements.dim(0) < 1) {
    throw InsufficientLengthError("loss weights need at least one observed displacement");
  }
  const std::size_t steps = observed.displacements.dim(0), nj = observed.joints();
  std::vector<double> r(nj, 0.0);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < nj; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = observed.displacements(i, j, c);
        sq += d * d;
      }
      r[j] += std::sqrt(sq);
    }
  }
  const double mean_r = std::accumulate(r.begin(), r.end(), 0.0) / double(nj);
  Tensor w(Shape{horizon, nj});
  double beta = 1.0;
  for (std::size_t i = 0; i < horizon; ++i) {
    for (std::size_t j = 0; j < nj; ++j) {
      w(i, j) = (1.0 + r[j] / (mean_r + cfg.motion_epsilon)) * beta;
    }
    beta *= cfg.temporal_decay;
  }
  return w;
}

inline LossWeights compute_weights(const PhaseTrajectory& observed, std::size_t horizon,
                                   const TrainConfig& cfg) {
  Tensor w = raw_loss_weights(observed, horizon, cfg);
  double total = 0.0;
  for (double v : w.data()) total += v;
  w *= double(w.size()) / total;
  return {std::move(w)};
}

inline double weighted_loss(const Tensor& predicted, const Tensor& truth,
                            const LossWeights& w) {
  return weighted_sq_error(predicted, truth, w.w);
}

inline Var weighted_loss(const Var& predicted, const Tensor& truth, const LossWeights& w) {
  return weighted_sq_error(predicted, truth, w.w);
}

// ---------------------------------------------------------------------------
// Optimisation

inline double global_norm(const ParamStore& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

/// Rescales all gradients together so their joint L2 norm is at most
/// `threshold`. Returns the norm before clipping.
inline double clip_global_norm(ParamStore& grads, double threshold) {
  const double norm = global_norm(grads);
  if (norm > threshold) {
    const double factor = threshold / norm;
    for (auto& [name, g] : grads) g *= factor;
  }
  return norm;
}

struct AdamState {
  std::uint64_t step = 0;
  ParamStore first;
  ParamStore second;
};

inline void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
                      const TrainConfig& cfg) {
  ++state.step;
  const double t = double(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    const auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    auto [mit, m_new] = state.first.try_emplace(name, p.shape(), 0.0);
    auto [vit, v_new] = state.second.try_emplace(name, p.shape(), 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

struct SampleResult {
  double loss = 0.0;
  ParamStore grads;
};

/// Loss and parameter gradients for one window. `rng` drives dropout and may
/// be null when `training` is false.
inline SampleResult sample_gradient(const Model& model, const SampleWindow& window,
                                    const TrainConfig& cfg, bool training, Rng* rng) {
  Tape tape;
  BoundParams params(tape, model.params);
  const PhaseTrajectory phase = to_phase(window.observed);
  const Tensor last = window.observed.frame(window.observed.frames() - 1);
  const Tensor truth = future_displacements(last, window.future);
  DecodeOptions opt;
  opt.training = training;
  opt.dropout = training ? cfg.dropout : 0.0;
  opt.rng = rng;
  const ForwardOutput out =
      run_model(params, model, phase, opt, cfg.teacher_forcing ? &truth : nullptr);
  const LossWeights w = compute_weights(phase, model.config.horizon, cfg);
  Var loss = weighted_loss(out.refined, truth, w);
  tape.backward(loss);
  return {loss.value().item(), params.gradients()};
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mpjpe_400ms = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochRecord> log;
  AdamState optimizer;
};

/// Mean MPJPE over windows at the frame reached after `ms`; NaN when the
/// horizon is shorter than that.
inline double mean_mpjpe_at(const Model& model, const std::vector<SampleWindow>& windows,
                            double ms, double fps) {
  const std::size_t f = horizon_frame(ms, fps);
  if (windows.empty() || f < 1 || f > model.config.horizon) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double total = 0.0;
  for (const auto& w : windows) total += mpjpe(predict(model, w.observed).poses, w.future, f - 1);
  return total / double(windows.size());
}

/// ADAM on the weighted displacement loss with global-norm clipping.
/// Batches are drawn from a per-epoch seeded shuffle; gradients are summed
/// in batch order, so a fixed seed reproduces the run bit for bit.
inline TrainResult train(Model& model, const std::vector<SampleWindow>& train_set,
                         const std::vector<SampleWindow>& val_set, const TrainConfig& cfg,
                         double fps = 25.0,
                         const std::function<void(const EpochRecord&)>& on_epoch = {},
                         AdamState state = {}) {
  cfg.validate();
  model.config.validate();
  if (train_set.empty() && cfg.epochs > 0) throw UsageError("training set is empty");
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(mix_seed(cfg.seed, 0x5eed, epoch)).shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size, ++batch_index) {
      const std::size_t last = std::min(order.size(), first + cfg.batch_size);
      ParamStore grads;
      double batch_loss = 0.0;
      for (std::size_t k = first; k < last; ++k) {
        Rng dropout_rng(mix_seed(cfg.seed, epoch, batch_index, k - first));
        SampleResult s = sample_gradient(model, train_set[order[k]], cfg, true, &dropout_rng);
        batch_loss += s.loss;
        if (grads.empty()) {
          grads = std::move(s.grads);
        } else {
          for (auto& [name, g] : grads) g += s.grads.at(name);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (first window " +
                            train_set[order[first]].source + "@" +
                            std::to_string(train_set[order[first]].start) + ")");
      }
      const double inv = 1.0 / double(last - first);
      for (auto& [name, g] : grads) g *= inv;
      clip_global_norm(grads, cfg.clip_threshold);
      adam_step(model.params, grads, state, cfg);
      clamp_offsets(model.params, model.config);
      epoch_loss += batch_loss;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / double(train_set.size());
    rec.val_mpjpe_400ms = mean_mpjpe_at(model, val_set, 400.0, fps);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.optimizer = std::move(state);
  return result;
}

/// `epoch<TAB>train_loss<TAB>val_mpjpe_400ms`, full precision.
inline std::string format_log_line(const EpochRecord& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g", r.epoch, r.train_loss,
                r.val_mpjpe_400ms);
  return buf;
}

}  // namespace phasemotion
