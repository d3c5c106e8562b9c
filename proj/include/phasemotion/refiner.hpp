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
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/ops.hpp"
#include "phasemotion/predictor.hpp"
#include "phasemotion/rng.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

/// Two pointwise 3→3 maps over displacement vectors.
struct ProjectionWeights {
  Tensor gamma_weight{Shape{3, 3}};
  Tensor gamma_bias{Shape{3}};
  Tensor phi_weight{Shape{3, 3}};
  Tensor phi_bias{Shape{3}};
};

/// γ and φ, each [3 × K] with K = n·J; column q = i·J + j holds future frame
/// i, joint j.
struct ProjectionFeatures {
  Tensor gamma;
  Tensor phi;

  std::size_t positions() const { return gamma.dim(1); }
};

namespace detail {

inline Tensor as_rows(const Tensor& disp) {
  if (disp.rank() != 3 || disp.dim(2) != 3) {
    throw DimensionError("displacements must be [n x J x 3], got " +
                         shape_string(disp.shape()));
  }
  return disp.reshaped({disp.dim(0) * disp.dim(1), 3});
}

}  // namespace detail

inline ProjectionFeatures project(const Tensor& disp, const ProjectionWeights& w) {
  const Tensor rows = detail::as_rows(disp);
  return {transpose(affine(rows, w.gamma_weight, w.gamma_bias)),
          transpose(affine(rows, w.phi_weight, w.phi_bias))};
}

/// A = softmax(γᵀφ), each row normalised over source positions (or each
/// column, for the sensitivity variant).
inline Tensor affinity(const ProjectionFeatures& f, AffinityNorm norm = AffinityNorm::rows) {
  if (f.gamma.shape() != f.phi.shape() || f.gamma.rank() != 2 || f.gamma.dim(0) != 3) {
    throw DimensionError("affinity: gamma " + shape_string(f.gamma.shape()) + " and phi " +
                         shape_string(f.phi.shape()) + " must both be [3 x K]");
  }
  const Tensor logits = matmul(transpose(f.gamma), f.phi);
  if (norm == AffinityNorm::rows) return softmax_rows(logits);
  return transpose(softmax_rows(transpose(logits)));
}

/// ω̂(q) = ω̃(q) + Σ_p A[q, p] ω̃(p).
inline Tensor refine(const Tensor& disp, const Tensor& a) {
  const Tensor rows = detail::as_rows(disp);
  const std::size_t k = rows.dim(0);
  if (a.rank() != 2 || a.dim(0) != k || a.dim(1) != k) {
    throw DimensionError("refine: affinity " + shape_string(a.shape()) +
                         " does not match " + std::to_string(k) + " positions of " +
                         shape_string(disp.shape()));
  }
  Tensor out = matmul(a, rows);
  out += rows;
  return out.reshaped(disp.shape());
}

// Recorded counterparts used by the model.

inline std::pair<Var, Var> project(BoundParams& params, const Var& disp_normalised) {
  const Shape& s = disp_normalised.shape();
  Var rows = reshape(disp_normalised, Shape{s[0] * s[1], 3});
  // Both returned as [K × 3] (γᵀ, φᵀ).
  return {affine(rows, params("refiner.gamma.weight"), params("refiner.gamma.bias")),
          affine(rows, params("refiner.phi.weight"), params("refiner.phi.bias"))};
}

namespace detail {

// Normalises exp(x - max) along rows (stride 1) or columns (stride K) in place.
inline void softmax_inplace(double* x, std::size_t k, AffinityNorm norm) {
  const std::size_t outer = norm == AffinityNorm::rows ? k : 1;
  const std::size_t inner = norm == AffinityNorm::rows ? 1 : k;
  for (std::size_t u = 0; u < k; ++u) {
    double* base = x + u * outer;
    double mx = -INFINITY;
    for (std::size_t v = 0; v < k; ++v) mx = std::max(mx, base[v * inner]);
    double total = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
      double& e = base[v * inner];
      e = std::exp(e - mx);
      total += e;
    }
    for (std::size_t v = 0; v < k; ++v) base[v * inner] /= total;
  }
}

}  // namespace detail

// Single recorded node for softmax(γᵀφ) over [K × 3] features; keeps one
// K×K buffer alive instead of four.
inline Var affinity(const Var& gamma_t, const Var& phi_t, AffinityNorm norm) {
  const Tensor& gv = gamma_t.value();
  const Tensor& pv = phi_t.value();
  if (gv.rank() != 2 || gv.shape() != pv.shape() || gv.dim(1) != 3) {
    throw DimensionError("affinity: gamma " + shape_string(gv.shape()) + " and phi " +
                         shape_string(pv.shape()) + " must both be [K x 3]");
  }
  const std::size_t k = gv.dim(0);
  Tensor a(Shape{k, k});
  {
    const double* gm = gv.data().data();
    const double* ph = pv.data().data();
    double* out = a.data().data();
    for (std::size_t q = 0; q < k; ++q) {
      const double g0 = gm[3 * q], g1 = gm[3 * q + 1], g2 = gm[3 * q + 2];
      for (std::size_t p = 0; p < k; ++p) {
        out[q * k + p] = g0 * ph[3 * p] + g1 * ph[3 * p + 1] + g2 * ph[3 * p + 2];
      }
    }
    detail::softmax_inplace(out, k, norm);
  }

  Tape& tape = gamma_t.tape();
  const std::size_t self = tape.next_id();
  const std::size_t ig = gamma_t.id(), ip = phi_t.id();
  return tape.record(std::move(a), {gamma_t, phi_t}, [self, ig, ip, k, norm](Tape& t,
                                                                            const Tensor& g) {
    const double* av = t.value(self).data().data();
    const double* gd = g.data().data();
    const double* gm = t.value(ig).data().data();
    const double* ph = t.value(ip).data().data();
    std::vector<double> scratch;
    double* dgm = t.requires_grad(ig) ? t.accumulate(ig).data().data() : nullptr;
    double* dph = t.requires_grad(ip) ? t.accumulate(ip).data().data() : nullptr;
    // Unused adjoints go to a scratch sink to keep the loops branch-free.
    if (!dgm || !dph) scratch.assign(3 * k, 0.0);
    if (!dgm) dgm = scratch.data();
    if (!dph) dph = scratch.data();
    if (norm == AffinityNorm::rows) {
      for (std::size_t q = 0; q < k; ++q) {
        const double* aq = av + q * k;
        const double* gq = gd + q * k;
        double dot = 0.0;
        for (std::size_t p = 0; p < k; ++p) dot += gq[p] * aq[p];
        const double c0 = gm[3 * q], c1 = gm[3 * q + 1], c2 = gm[3 * q + 2];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          const double d = aq[p] * (gq[p] - dot);
          s0 += d * ph[3 * p];
          s1 += d * ph[3 * p + 1];
          s2 += d * ph[3 * p + 2];
          dph[3 * p] += d * c0;
          dph[3 * p + 1] += d * c1;
          dph[3 * p + 2] += d * c2;
        }
        dgm[3 * q] += s0;
        dgm[3 * q + 1] += s1;
        dgm[3 * q + 2] += s2;
      }
    } else {
      std::vector<double> dots(k, 0.0);
      for (std::size_t q = 0; q < k; ++q) {
        for (std::size_t p = 0; p < k; ++p) dots[p] += gd[q * k + p] * av[q * k + p];
      }
      for (std::size_t q = 0; q < k; ++q) {
        const double c0 = gm[3 * q], c1 = gm[3 * q + 1], c2 = gm[3 * q + 2];
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
          const double d = av[q * k + p] * (gd[q * k + p] - dots[p]);
          s0 += d * ph[3 * p];
          s1 += d * ph[3 * p + 1];
          s2 += d * ph[3 * p + 2];
          dph[3 * p] += d * c0;
          dph[3 * p + 1] += d * c1;
          dph[3 * p + 2] += d * c2;
        }
        dgm[3 * q] += s0;
        dgm[3 * q + 1] += s1;
        dgm[3 * q + 2] += s2;
      }
    }
  });
}

inline Var refine(const Var& disp, const Var& a) {
  const Shape s = disp.shape();
  const Tensor rows = detail::as_rows(disp.value());
  const Tensor& av = a.value();
  const std::size_t k = rows.dim(0);
  if (av.rank() != 2 || av.dim(0) != k || av.dim(1) != k) {
    throw DimensionError("refine: affinity " + shape_string(av.shape()) +
                         " does not match " + std::to_string(k) + " positions of " +
                         shape_string(s));
  }
  Tensor out = rows;
  const double* x = rows.data().data();
  for (std::size_t q = 0; q < k; ++q) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double w = av(q, p);
      s0 += w * x[3 * p];
      s1 += w * x[3 * p + 1];
      s2 += w * x[3 * p + 2];
    }
    out(q, 0) += s0;
    out(q, 1) += s1;
    out(q, 2) += s2;
  }
  const std::size_t id = disp.id(), ia = a.id();
  return disp.tape().record(
      out.reshaped(s), {disp, a}, [id, ia, k](Tape& t, const Tensor& g) {
        const double* x = t.value(id).data().data();
        const double* w = t.value(ia).data().data();
        const double* gd = g.data().data();
        double* dx = t.requires_grad(id) ? t.accumulate(id).data().data() : nullptr;
        double* dw = t.requires_grad(ia) ? t.accumulate(ia).data().data() : nullptr;
        if (dx) {
          for (std::size_t i = 0; i < 3 * k; ++i) dx[i] += gd[i];
        }
        for (std::size_t q = 0; q < k; ++q) {
          const double g0 = gd[3 * q], g1 = gd[3 * q + 1], g2 = gd[3 * q + 2];
          for (std::size_t p = 0; p < k; ++p) {
            if (dw) dw[q * k + p] += g0 * x[3 * p] + g1 * x[3 * p + 1] + g2 * x[3 * p + 2];
            if (dx) {
              const double wqp = w[q * k + p];
              dx[3 * p] += wqp * g0;
              dx[3 * p + 1] += wqp * g1;
              dx[3 * p + 2] += wqp * g2;
            }
          }
        }
      });
}

inline void init_refiner_params(ParamStore& store, Rng& rng) {
  store["refiner.gamma.weight"] = detail::glorot(rng, {3, 3}, 3.0, 3.0);
  store["refiner.gamma.bias"] = Tensor(Shape{3}, 0.0);
  store["refiner.phi.weight"] = detail::glorot(rng, {3, 3}, 3.0, 3.0);
  store["refiner.phi.bias"] = Tensor(Shape{3}, 0.0);
}

/// Writes A row-major, one row per line.
inline void write_matrix(const std::string& path, const Tensor& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[32];
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < a.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", a(i, j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace phasemotion
