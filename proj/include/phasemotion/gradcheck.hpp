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

// Central finite-difference verification of the recorded pullbacks. The
// numeric side only ever evaluates forward values, so it stays independent of
// the analytic path it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phasemotion/model.hpp"
#include "phasemotion/ops.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/tape.hpp"
#include "phasemotion/training.hpp"

namespace phasemotion {

/// Gradients with norm below this are compared absolutely. A bias that the
/// row softmax is invariant to has an exact zero gradient, while central
/// differences on a loss of order 1e3 carry round-off near 1e-8.
inline constexpr double kRelativeErrorFloor = 1e-3;

/// ‖a − n‖ / max(‖a‖, ‖n‖, kRelativeErrorFloor).
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - numeric[i];
    diff += d * d;
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max(std::sqrt(std::max(na, nn)), kRelativeErrorFloor);
  return std::sqrt(diff) / denom;
}

/// Builds a scalar from the given leaf variables on a fresh tape.
using ScalarGraph = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Largest relative error over all inputs between the tape gradient and
/// central differences with step `step`.
inline double check_gradient(const ScalarGraph& graph, const std::vector<Tensor>& inputs,
                             double step = 1e-5) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  Var loss = graph(tape, vars);
  tape.backward(loss);
  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  auto eval = [&]() {
    Tape t;
    std::vector<Var> v;
    for (const auto& x : probe) v.push_back(t.constant(x));
    return graph(t, v).value().item();
  };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + step;
      const double up = eval();
      probe[k][i] = x0 - step;
      const double down = eval();
      probe[k][i] = x0;
      numeric[i] = (up - down) / (2.0 * step);
    }
    worst = std::max(worst, relative_error(tape.grad(vars[k]), numeric));
  }
  return worst;
}

namespace detail {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Offsets strictly inside the valid range and away from integer positions,
// where linear interpolation has kinks.
inline Tensor interior_offsets(Rng& rng, std::size_t k) {
  Tensor off(Shape{k});
  for (std::size_t i = 0; i < k; ++i) {
    const double u = rng.uniform(0.1, 0.4);
    off[i] = (i + 1 < k) ? u : -u;
  }
  return off;
}

// Σ c ⊙ y with a fixed random projection c.
inline Var project_sum(Tape& tape, const Var& y, const Tensor& c) {
  return sum(mul(y, tape.constant(c)));
}

}  // namespace detail

struct GradCheckEntry {
  std::string op;
  double max_relative_error = 0.0;
  std::size_t configurations = 0;
};

/// Four joints: torso root with a head and one joint per arm.
inline Skeleton gradcheck_skeleton() {
  std::vector<JointSpec> j{
      {"root", -1, LimbTag::torso, {0.0, 1000.0, 0.0}},
      {"left_arm_0", 0, LimbTag::left_arm, {200.0, 300.0, 0.0}},
      {"right_arm_0", 0, LimbTag::right_arm, {-200.0, 300.0, 0.0}},
      {"head_0", 0, LimbTag::head, {0.0, 350.0, 0.0}},
  };
  return Skeleton(std::move(j), "gradcheck4");
}

/// Tiny end-to-end configuration: J=4, N=4, n=2, m=1, hidden 8.
inline ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.channels = 1;
  c.dilations = {1, 2, 3};
  c.kernel = 2;
  c.hidden = 8;
  c.observed = 5;
  c.horizon = 2;
  return c;
}

/// Relative error of every parameter gradient of the weighted loss through
/// predictor and refiner for one random model and window.
inline double check_model_gradient(std::uint64_t seed, const ModelConfig& cfg,
                                   const Skeleton& skeleton, double step = 1e-5) {
  Rng rng(mix_seed(seed, 0x6c));
  Model model = make_model(cfg, skeleton, seed);
  for (auto& [name, p] : model.params) {
    if (name.ends_with(".offset")) {
      p = detail::interior_offsets(rng, p.size());
    } else {
      // Non-zero biases exercise every path.
      for (double& v : p.data()) {
        if (v == 0.0) v = rng.uniform(-0.3, 0.3);
      }
    }
  }
  const std::size_t nj = skeleton.joint_count();
  const Tensor rest = skeleton.rest_pose();
  Tensor obs(Shape{cfg.observed, nj, 3});
  for (std::size_t f = 0; f < cfg.observed; ++f)
    for (std::size_t q = 0; q < nj * 3; ++q) obs[f * nj * 3 + q] = rest[q] + rng.uniform(-40.0, 40.0);
  const PhaseTrajectory phase = to_phase(PoseSequence(obs));
  const Tensor truth = detail::random_tensor(rng, {cfg.horizon, nj, 3}, -8.0, 8.0);
  TrainConfig tc;
  const LossWeights w = compute_weights(phase, cfg.horizon, tc);

  auto loss_of = [&](const ParamStore& params, ParamStore* grads) {
    Tape tape;
    BoundParams bound(tape, params);
    Model view{model.config, model.skeleton, model.relations, {}};
    const ForwardOutput out = run_model(bound, view, phase);
    Var loss = weighted_loss(out.refined, truth, w);
    if (grads) {
      tape.backward(loss);
      *grads = bound.gradients();
    }
    return loss.value().item();
  };
  ParamStore analytic;
  loss_of(model.params, &analytic);
  ParamStore probe = model.params;
  double worst = 0.0;
  for (auto& [name, p] : probe) {
    Tensor numeric(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double x0 = p[i];
      p[i] = x0 + step;
      const double up = loss_of(probe, nullptr);
      p[i] = x0 - step;
      const double down = loss_of(probe, nullptr);
      p[i] = x0;
      numeric[i] = (up - down) / (2.0 * step);
    }
    worst = std::max(worst, relative_error(analytic.at(name), numeric));
  }
  return worst;
}

/// Runs every differentiable op and the full model over `seeds` random
/// configurations.
inline std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t base_seed,
                                                       std::size_t seeds = 20) {
  using detail::random_tensor;
  std::vector<GradCheckEntry> entries;
  auto run = [&](const std::string& name,
                 const std::function<double(Rng&, std::uint64_t)>& one) {
    GradCheckEntry e{name, 0.0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(mix_seed(base_seed, entries.size(), s));
      e.max_relative_error = std::max(e.max_relative_error, one(rng, base_seed + s));
    }
    entries.push_back(e);
  };

  run("matmul", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {3, 2});
    return check_gradient(
        [&c](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, matmul(v[0], v[1]), c);
        },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 2})});
  });
  run("transpose", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {4, 3});
    return check_gradient(
        [&c](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, transpose(v[0]), c);
        },
        {random_tensor(rng, {3, 4})});
  });
  run("affine", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {5, 3});
    return check_gradient(
        [&c](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, affine(v[0], v[1], v[2]), c);
        },
        {random_tensor(rng, {5, 4}), random_tensor(rng, {3, 4}), random_tensor(rng, {3})});
  });
  run("softmax_rows", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {5, 5});
    return check_gradient(
        [&c](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, softmax_rows(v[0]), c);
        },
        {random_tensor(rng, {5, 5}, -3.0, 3.0)});
  });
  run("dilated_conv1d", [](Rng& rng, std::uint64_t) {
    const std::size_t dilation = 1 + rng.below(3);
    const std::size_t k = 2 + rng.below(2);
    const std::size_t len = (k - 1) * dilation + 1 + 3;
    const std::size_t out = len - (k - 1) * dilation;
    const Tensor c = random_tensor(rng, {2, out});
    return check_gradient(
        [&c, dilation](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, dilated_conv1d(v[0], v[1], dilation, v[2]), c);
        },
        {random_tensor(rng, {3, len}), random_tensor(rng, {2, 3, k}),
         detail::interior_offsets(rng, k)});
  });
  run("gru_cell", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {4});
    return check_gradient(
        [&c](Tape& t, const std::vector<Var>& v) {
          return detail::project_sum(t, gru_cell(v[0], v[1], v[2], v[3], v[4]), c);
        },
        {random_tensor(rng, {3}), random_tensor(rng, {4}), random_tensor(rng, {12, 3}),
         random_tensor(rng, {12, 4}), random_tensor(rng, {12})});
  });
  run("elementwise", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {6});
    const Tensor mask = random_tensor(rng, {6});
    return check_gradient(
        [&](Tape& t, const std::vector<Var>& v) {
          Var y = add(mul(v[0], v[1]), scale(sub(v[0], v[1]), 0.7));
          return detail::project_sum(t, mul_const(y, mask), c);
        },
        {random_tensor(rng, {6}), random_tensor(rng, {6})});
  });
  run("gather_concat_reshape", [](Rng& rng, std::uint64_t) {
    const Tensor c = random_tensor(rng, {2, 3});
    std::vector<std::size_t> idx{4, 0, 0, 6, 2, 1};
    return check_gradient(
        [&](Tape& t, const std::vector<Var>& v) {
          Var flat = concat({v[0], reshape(v[1], Shape{4})});
          return detail::project_sum(t, gather(flat, idx, Shape{2, 3}), c);
        },
        {random_tensor(rng, {3}), random_tensor(rng, {2, 2})});
  });
  run("weighted_loss", [](Rng& rng, std::uint64_t) {
    const Tensor target = random_tensor(rng, {2, 3, 3});
    const Tensor w = random_tensor(rng, {2, 3}, 0.1, 2.0);
    return check_gradient(
        [&](Tape&, const std::vector<Var>& v) { return weighted_sq_error(v[0], target, w); },
        {random_tensor(rng, {2, 3, 3})});
  });
  run("affinity_refine", [](Rng& rng, std::uint64_t seed) {
    const Tensor c = random_tensor(rng, {2, 3, 3});
    const AffinityNorm norm = seed % 2 ? AffinityNorm::columns : AffinityNorm::rows;
    return check_gradient(
        [&c, norm](Tape& t, const std::vector<Var>& v) {
          Var rows = reshape(v[0], Shape{6, 3});
          Var a = affinity(affine(rows, v[1], v[2]), affine(rows, v[3], v[4]), norm);
          return detail::project_sum(t, refine(v[0], a), c);
        },
        {random_tensor(rng, {2, 3, 3}), random_tensor(rng, {3, 3}), random_tensor(rng, {3}),
         random_tensor(rng, {3, 3}), random_tensor(rng, {3})});
  });
  run("model", [](Rng&, std::uint64_t seed) {
    return check_model_gradient(seed, gradcheck_model_config(), gradcheck_skeleton());
  });
  return entries;
}

}  // namespace phasemotion
