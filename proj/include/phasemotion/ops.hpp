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

// Tensor kernels and their tape-recording counterparts. Each Var overload
// computes the forward value with the Tensor kernel of the same name and
// records an exact analytic pullback.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "phasemotion/error.hpp"
#include "phasemotion/tape.hpp"
#include "phasemotion/tensor.hpp"

namespace phasemotion {

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op,
                         const char* arg) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " +
                         std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

inline void require_same_size(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()) + " differ");
  }
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense linear algebra

namespace detail {

// c[p×r] += a[p×q] · b[q×r]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
                    std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    double* ci = c + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = a[i * q + k];
      if (aik == 0.0) continue;
      const double* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[p×r] += a[p×q] · b[r×q]ᵀ
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
                    std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* ai = a + i * q;
    for (std::size_t j = 0; j < r; ++j) {
      const double* bj = b + j * q;
      double s = 0.0;
      for (std::size_t k = 0; k < q; ++k) s += ai[k] * bj[k];
      c[i * r + j] += s;
    }
  }
}

// c[q×r] += a[p×q]ᵀ · b[p×r]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t p, std::size_t q,
                    std::size_t r) {
  for (std::size_t i = 0; i < p; ++i) {
    const double* ai = a + i * q;
    const double* bi = b + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ck = c + k * r;
      for (std::size_t j = 0; j < r; ++j) ck[j] += aik * bi[j];
    }
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul", "lhs");
  detail::require_rank(b, 2, "matmul", "rhs");
  const std::size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  if (b.dim(0) != q) {
    throw DimensionError("matmul: inner extents differ for " +
                         shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor c(Shape{p, r}, 0.0);
  detail::gemm_nn(a.data().data(), b.data().data(), c.data().data(), p, q, r);
  return c;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor t(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t(j, i) = a(i, j);
  return t;
}

/// y = x·Wᵀ + b applied to every row of x (a 1×1 convolution over positions).
/// x may be a single vector [c_in] or a batch of rows [rows × c_in].
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require_rank(w, 2, "affine", "weight");
  detail::require_rank(b, 1, "affine", "bias");
  const std::size_t c_out = w.dim(0), c_in = w.dim(1);
  if (b.dim(0) != c_out || (x.rank() != 1 && x.rank() != 2) ||
      x.shape().back() != c_in) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " +
                         shape_string(b.shape()) + " are inconsistent");
  }
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  Tensor y(x.rank() == 1 ? Shape{c_out} : Shape{rows, c_out});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * c_in;
    double* yr = y.data().data() + r * c_out;
    for (std::size_t o = 0; o < c_out; ++o) {
      double s = b[o];
      const double* wo = w.data().data() + o * c_in;
      for (std::size_t i = 0; i < c_in; ++i) s += wo[i] * xr[i];
      yr[o] = s;
    }
  }
  return y;
}

/// Row-wise softmax with per-row max subtraction.
inline Tensor softmax_rows(const Tensor& logits) {
  detail::require_rank(logits, 2, "softmax_rows", "logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor y(logits.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, logits(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double e = std::exp(logits(i, j) - mx);
      y(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < cols; ++j) y(i, j) /= total;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Deformable dilated temporal convolution

namespace detail {

struct TapSample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Linear-interpolation footprint of every (tap, output step) pair.
inline std::vector<TapSample> conv_taps(std::size_t length, std::size_t taps,
                                        std::size_t dilation, const Tensor& offsets,
                                        std::size_t out_len) {
  std::vector<TapSample> samples(taps * out_len);
  const double last = static_cast<double>(length - 1);
  for (std::size_t i = 0; i < taps; ++i) {
    const double off = offsets[i];
    if (!std::isfinite(off)) {
      throw DomainError("dilated_conv1d: offset " + std::to_string(i) +
                        " is not finite");
    }
    for (std::size_t t = 0; t < out_len; ++t) {
      const double pos = static_cast<double>(t + i * dilation) + off;
      if (pos < 0.0 || pos > last) {
        throw DomainError("dilated_conv1d: tap " + std::to_string(i) +
                          " samples position " + std::to_string(pos) +
                          " outside [0, " + std::to_string(length - 1) + "]");
      }
      std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      if (length == 1) {
        samples[i * out_len + t] = {0, 0, 0.0};
        continue;
      }
      if (lo >= length - 1) lo = length - 2;
      samples[i * out_len + t] = {lo, lo + 1, pos - static_cast<double>(lo)};
    }
  }
  return samples;
}

inline std::size_t conv_out_len(const Tensor& signal, const Tensor& kernel,
                                std::size_t dilation, const Tensor& offsets) {
  require_rank(signal, 2, "dilated_conv1d", "signal");
  require_rank(kernel, 3, "dilated_conv1d", "kernel");
  require_rank(offsets, 1, "dilated_conv1d", "offsets");
  if (dilation == 0) throw DomainError("dilated_conv1d: dilation must be >= 1");
  const std::size_t c_in = signal.dim(0), length = signal.dim(1);
  const std::size_t k = kernel.dim(2);
  if (kernel.dim(1) != c_in || offsets.dim(0) != k || k == 0) {
    throw DimensionError("dilated_conv1d: signal " + shape_string(signal.shape()) +
                         ", kernel " + shape_string(kernel.shape()) + ", offsets " +
                         shape_string(offsets.shape()) + " are inconsistent");
  }
  const std::size_t span = (k - 1) * dilation + 1;
  if (length < span) {
    throw DimensionError("dilated_conv1d: signal length " + std::to_string(length) +
                         " shorter than receptive field " + std::to_string(span) +
                         " (signal " + shape_string(signal.shape()) + ", kernel " +
                         shape_string(kernel.shape()) + ")");
  }
  return length - (k - 1) * dilation;
}

}  // namespace detail

/// Valid cross-correlation along time with dilated taps whose positions are
/// shifted by fractional offsets: output step t reads tap i at
/// t + i*dilation + offsets[i], linearly interpolated. Tap k-1 is the most
/// recent sample, so the output step t is aligned with input time
/// t + (k-1)*dilation.
///
/// signal [c_in × L], kernel [c_out × c_in × k], offsets [k]
/// -> [c_out × (L - (k-1)*dilation)]
inline Tensor dilated_conv1d(const Tensor& signal, const Tensor& kernel,
                             std::size_t dilation, const Tensor& offsets) {
  const std::size_t out_len = detail::conv_out_len(signal, kernel, dilation, offsets);
  const std::size_t c_out = kernel.dim(0), c_in = kernel.dim(1), k = kernel.dim(2);
  const std::size_t length = signal.dim(1);
  const auto taps = detail::conv_taps(length, k, dilation, offsets, out_len);
  Tensor out(Shape{c_out, out_len}, 0.0);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      for (std::size_t i = 0; i < k; ++i) {
        const double w = kernel(o, c, i);
        for (std::size_t t = 0; t < out_len; ++t) {
          const auto& s = taps[i * out_len + t];
          const double v = signal(c, s.lo) * (1.0 - s.frac) + signal(c, s.hi) * s.frac;
          out(o, t) += w * v;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gated recurrent unit

/// Stacked gate weights, rows ordered update (z), reset (r), candidate.
struct GruWeights {
  Tensor input;      // [3H × D]
  Tensor recurrent;  // [3H × H]
  Tensor bias;       // [3H]
};

namespace detail {

struct GruGates {
  std::vector<double> z, r, cand, rh;
};

inline void check_gru(const Tensor& x, const Tensor& h, const Tensor& wi,
                      const Tensor& wh, const Tensor& b) {
  require_rank(x, 1, "gru_cell", "x");
  require_rank(h, 1, "gru_cell", "h");
  const std::size_t d = x.dim(0), hd = h.dim(0);
  if (wi.rank() != 2 || wh.rank() != 2 || b.rank() != 1 || wi.dim(0) != 3 * hd ||
      wi.dim(1) != d || wh.dim(0) != 3 * hd || wh.dim(1) != hd || b.dim(0) != 3 * hd) {
    throw DimensionError("gru_cell: x " + shape_string(x.shape()) + ", h " +
                         shape_string(h.shape()) + " do not fit weights " +
                         shape_string(wi.shape()) + ", " + shape_string(wh.shape()) +
                         ", " + shape_string(b.shape()));
  }
}

inline double dot_row(const Tensor& m, std::size_t row, const double* v,
                      std::size_t n) {
  const double* p = m.data().data() + row * n;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i] * v[i];
  return s;
}

inline GruGates gru_gates(const Tensor& x, const Tensor& h, const Tensor& wi,
                          const Tensor& wh, const Tensor& b) {
  const std::size_t d = x.dim(0), hd = h.dim(0);
  const double* xv = x.data().data();
  const double* hv = h.data().data();
  GruGates g{std::vector<double>(hd), std::vector<double>(hd),
             std::vector<double>(hd), std::vector<double>(hd)};
  for (std::size_t u = 0; u < hd; ++u) {
    g.z[u] = sigmoid(dot_row(wi, u, xv, d) + dot_row(wh, u, hv, hd) + b[u]);
    g.r[u] = sigmoid(dot_row(wi, hd + u, xv, d) + dot_row(wh, hd + u, hv, hd) +
                     b[hd + u]);
    g.rh[u] = g.r[u] * hv[u];
  }
  for (std::size_t u = 0; u < hd; ++u) {
    g.cand[u] = std::tanh(dot_row(wi, 2 * hd + u, xv, d) +
                          dot_row(wh, 2 * hd + u, g.rh.data(), hd) + b[2 * hd + u]);
  }
  return g;
}

}  // namespace detail

/// h' = (1 - z) ⊙ h + z ⊙ tanh(W_c x + U_c (r ⊙ h) + b_c)
inline Tensor gru_cell(const Tensor& x, const Tensor& h, const GruWeights& w) {
  detail::check_gru(x, h, w.input, w.recurrent, w.bias);
  const auto g = detail::gru_gates(x, h, w.input, w.recurrent, w.bias);
  Tensor out(h.shape());
  for (std::size_t u = 0; u < h.size(); ++u) {
    out[u] = (1.0 - g.z[u]) * h[u] + g.z[u] * g.cand[u];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recorded ops

inline Var matmul(const Var& a, const Var& b) {
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(matmul(a.value(), b.value()), {a, b},
                     [ia, ib](Tape& t, const Tensor& g) {
                       const Tensor& av = t.value(ia);
                       const Tensor& bv = t.value(ib);
                       const std::size_t p = av.dim(0), q = av.dim(1), r = bv.dim(1);
                       if (t.requires_grad(ia)) {
                         detail::gemm_nt(g.data().data(), bv.data().data(),
                                         t.accumulate(ia).data().data(), p, r, q);
                       }
                       if (t.requires_grad(ib)) {
                         detail::gemm_tn(av.data().data(), g.data().data(),
                                         t.accumulate(ib).data().data(), p, q, r);
                       }
                     });
}

inline Var transpose(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(transpose(a.value()), {a},
                         [ia](Tape& t, const Tensor& g) {
                           t.accumulate(ia) += transpose(g);
                         });
}

inline Var affine(const Var& x, const Var& w, const Var& b) {
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape().record(
      affine(x.value(), w.value(), b.value()), {x, w, b},
      [ix, iw, ib](Tape& t, const Tensor& g) {
        const Tensor& xv = t.value(ix);
        const Tensor& wv = t.value(iw);
        const std::size_t c_out = wv.dim(0), c_in = wv.dim(1);
        const std::size_t rows = xv.rank() == 1 ? 1 : xv.dim(0);
        const bool gx = t.requires_grad(ix), gw = t.requires_grad(iw),
                   gb = t.requires_grad(ib);
        Tensor* dx = gx ? &t.accumulate(ix) : nullptr;
        Tensor* dw = gw ? &t.accumulate(iw) : nullptr;
        Tensor* db = gb ? &t.accumulate(ib) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < c_out; ++o) {
            const double go = g[r * c_out + o];
            if (go == 0.0) continue;
            if (db) (*db)[o] += go;
            for (std::size_t i = 0; i < c_in; ++i) {
              if (dw) (*dw)[o * c_in + i] += go * xv[r * c_in + i];
              if (dx) (*dx)[r * c_in + i] += go * wv[o * c_in + i];
            }
          }
        }
      });
}

inline Var softmax_rows(const Var& logits) {
  const std::size_t il = logits.id();
  Tape& tape = logits.tape();
  const std::size_t self = tape.next_id();
  return tape.record(softmax_rows(logits.value()), {logits}, [il, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& dl = t.accumulate(il);
    const std::size_t rows = y.dim(0), cols = y.dim(1);
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < cols; ++j) dl(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

inline Var dilated_conv1d(const Var& signal, const Var& kernel, std::size_t dilation,
                          const Var& offsets) {
  const std::size_t is = signal.id(), ik = kernel.id(), io = offsets.id();
  return signal.tape().record(
      dilated_conv1d(signal.value(), kernel.value(), dilation, offsets.value()),
      {signal, kernel, offsets}, [is, ik, io, dilation](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(is);
        const Tensor& kv = t.value(ik);
        const Tensor& off = t.value(io);
        const std::size_t c_out = kv.dim(0), c_in = kv.dim(1), k = kv.dim(2);
        const std::size_t out_len = g.dim(1);
        const auto taps = detail::conv_taps(x.dim(1), k, dilation, off, out_len);
        Tensor* dx = t.requires_grad(is) ? &t.accumulate(is) : nullptr;
        Tensor* dk = t.requires_grad(ik) ? &t.accumulate(ik) : nullptr;
        Tensor* doff = t.requires_grad(io) ? &t.accumulate(io) : nullptr;
        for (std::size_t o = 0; o < c_out; ++o) {
          for (std::size_t c = 0; c < c_in; ++c) {
            for (std::size_t i = 0; i < k; ++i) {
              const double w = kv(o, c, i);
              double dw = 0.0;
              for (std::size_t tt = 0; tt < out_len; ++tt) {
                const double go = g(o, tt);
                const auto& s = taps[i * out_len + tt];
                const double lo = x(c, s.lo), hi = x(c, s.hi);
                dw += go * (lo * (1.0 - s.frac) + hi * s.frac);
                if (dx) {
                  (*dx)(c, s.lo) += go * w * (1.0 - s.frac);
                  (*dx)(c, s.hi) += go * w * s.frac;
                }
                if (doff) (*doff)[i] += go * w * (hi - lo);
              }
              if (dk) (*dk)(o, c, i) += dw;
            }
          }
        }
      });
}

inline Var gru_cell(const Var& x, const Var& h, const Var& wi, const Var& wh,
                    const Var& b) {
  detail::check_gru(x.value(), h.value(), wi.value(), wh.value(), b.value());
  auto gates = std::make_shared<detail::GruGates>(
      detail::gru_gates(x.value(), h.value(), wi.value(), wh.value(), b.value()));
  const Tensor& hv = h.value();
  Tensor out(hv.shape());
  for (std::size_t u = 0; u < hv.size(); ++u) {
    out[u] = (1.0 - gates->z[u]) * hv[u] + gates->z[u] * gates->cand[u];
  }
  const std::size_t ix = x.id(), ih = h.id(), iwi = wi.id(), iwh = wh.id(), ib = b.id();
  return x.tape().record(std::move(out), {x, h, wi, wh, b},
                         [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    const Tensor& hvv = t.value(ih);
    const Tensor& wiv = t.value(iwi);
    const Tensor& whv = t.value(iwh);
    const std::size_t d = xv.size(), hd = hvv.size();
    const auto& z = gates->z;
    const auto& r = gates->r;
    const auto& c = gates->cand;
    const auto& rh = gates->rh;
    // Pre-activation adjoints, stacked like the bias: [z | r | cand].
    std::vector<double> da(3 * hd, 0.0);
    std::vector<double> dh(hd, 0.0);
    for (std::size_t u = 0; u < hd; ++u) {
      const double dz = g[u] * (c[u] - hvv[u]);
      const double dc = g[u] * z[u];
      dh[u] += g[u] * (1.0 - z[u]);
      da[u] = dz * z[u] * (1.0 - z[u]);
      da[2 * hd + u] = dc * (1.0 - c[u] * c[u]);
    }
    // Through U_c (r ⊙ h).
    std::vector<double> drh(hd, 0.0);
    for (std::size_t u = 0; u < hd; ++u) {
      const double a = da[2 * hd + u];
      if (a == 0.0) continue;
      const double* row = whv.data().data() + (2 * hd + u) * hd;
      for (std::size_t v = 0; v < hd; ++v) drh[v] += row[v] * a;
    }
    for (std::size_t u = 0; u < hd; ++u) {
      const double dr = drh[u] * hvv[u];
      dh[u] += drh[u] * r[u];
      da[hd + u] = dr * r[u] * (1.0 - r[u]);
    }
    if (t.requires_grad(ib)) {
      Tensor& db = t.accumulate(ib);
      for (std::size_t q = 0; q < 3 * hd; ++q) db[q] += da[q];
    }
    if (t.requires_grad(iwi)) {
      Tensor& dw = t.accumulate(iwi);
      for (std::size_t q = 0; q < 3 * hd; ++q) {
        if (da[q] == 0.0) continue;
        double* row = dw.data().data() + q * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += da[q] * xv[i];
      }
    }
    if (t.requires_grad(iwh)) {
      Tensor& dw = t.accumulate(iwh);
      for (std::size_t q = 0; q < 3 * hd; ++q) {
        if (da[q] == 0.0) continue;
        const double* src = q < 2 * hd ? hvv.data().data() : rh.data();
        double* row = dw.data().data() + q * hd;
        for (std::size_t v = 0; v < hd; ++v) row[v] += da[q] * src[v];
      }
    }
    if (t.requires_grad(ix)) {
      Tensor& dx = t.accumulate(ix);
      for (std::size_t q = 0; q < 3 * hd; ++q) {
        if (da[q] == 0.0) continue;
        const double* row = wiv.data().data() + q * d;
        for (std::size_t i = 0; i < d; ++i) dx[i] += row[i] * da[q];
      }
    }
    if (t.requires_grad(ih)) {
      for (std::size_t q = 0; q < 2 * hd; ++q) {
        if (da[q] == 0.0) continue;
        const double* row = whv.data().data() + q * hd;
        for (std::size_t v = 0; v < hd; ++v) dh[v] += row[v] * da[q];
      }
      Tensor& dhh = t.accumulate(ih);
      for (std::size_t u = 0; u < hd; ++u) dhh[u] += dh[u];
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

inline Var add(const Var& a, const Var& b) {
  detail::require_same_size(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia) += g;
    if (t.requires_grad(ib)) t.accumulate(ib) += g;
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_size(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia) += g;
    if (t.requires_grad(ib)) {
      Tensor& d = t.accumulate(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

/// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_size(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& d = t.accumulate(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& d = t.accumulate(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, const Tensor& g) {
    Tensor& d = t.accumulate(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
  });
}

/// Elementwise product with a constant mask (dropout).
inline Var mul_const(const Var& a, Tensor mask) {
  detail::require_same_size(a.value(), mask, "mul_const");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.id();
  auto m = std::make_shared<Tensor>(std::move(mask));
  return a.tape().record(std::move(out), {a}, [ia, m](Tape& t, const Tensor& g) {
    Tensor& d = t.accumulate(ia);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (*m)[i];
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& d = t.accumulate(ia);
    const double gv = g[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv;
  });
}

inline Var reshape(const Var& a, Shape shape) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [ia](Tape& t, const Tensor& g) {
                           Tensor& d = t.accumulate(ia);
                           for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                         });
}

/// out[q] = a.flat[indices[q]], reshaped to `shape`.
inline Var gather(const Var& a, std::vector<std::size_t> indices, Shape shape) {
  if (shape_size(shape) != indices.size()) {
    throw DimensionError("gather: " + std::to_string(indices.size()) +
                         " indices for shape " + shape_string(shape));
  }
  const Tensor& av = a.value();
  Tensor out(std::move(shape));
  for (std::size_t q = 0; q < indices.size(); ++q) {
    if (indices[q] >= av.size()) {
      throw IndexError("gather: index " + std::to_string(indices[q]) +
                       " out of range for " + shape_string(av.shape()));
    }
    out[q] = av[indices[q]];
  }
  const std::size_t ia = a.id();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  return a.tape().record(std::move(out), {a}, [ia, idx](Tape& t, const Tensor& g) {
    Tensor& d = t.accumulate(ia);
    for (std::size_t q = 0; q < idx->size(); ++q) d[(*idx)[q]] += g[q];
  });
}

/// Flattens every input and concatenates them into one vector.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  std::size_t total = 0;
  for (const Var& p : parts) total += p.value().size();
  Tensor out(Shape{total});
  std::size_t at = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<long>(at));
    at += src.size();
  }
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(
      std::move(out), parts, [ids = std::move(ids)](Tape& t, const Tensor& g) {
        std::size_t pos = 0;
        for (std::size_t id : ids) {
          const std::size_t n = t.value(id).size();
          if (t.requires_grad(id)) {
            Tensor& d = t.accumulate(id);
            for (std::size_t i = 0; i < n; ++i) d[i] += g[pos + i];
          }
          pos += n;
        }
      });
}

/// Σ_{i,j} w[i,j] · ‖pred[i,j,:] − target[i,j,:]‖² for pred, target [n × J × 3]
/// and w [n × J].
inline double weighted_sq_error(const Tensor& pred, const Tensor& target,
                                const Tensor& weights) {
  detail::require_same_size(pred, target, "weighted_loss");
  detail::require_rank(pred, 3, "weighted_loss", "prediction");
  if (weights.rank() != 2 || weights.dim(0) != pred.dim(0) ||
      weights.dim(1) != pred.dim(1)) {
    throw DimensionError("weighted_loss: weights " + shape_string(weights.shape()) +
                         " do not match prediction " + shape_string(pred.shape()));
  }
  const std::size_t width = pred.dim(2);
  double loss = 0.0;
  for (std::size_t p = 0; p < weights.size(); ++p) {
    double sq = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      const double e = pred[p * width + c] - target[p * width + c];
      sq += e * e;
    }
    loss += weights[p] * sq;
  }
  return loss;
}

inline Var weighted_sq_error(const Var& pred, const Tensor& target,
                             const Tensor& weights) {
  const double loss = weighted_sq_error(pred.value(), target, weights);
  const std::size_t ip = pred.id();
  auto tg = std::make_shared<Tensor>(target);
  auto wt = std::make_shared<Tensor>(weights);
  return pred.tape().record(
      Tensor::scalar(loss), {pred}, [ip, tg, wt](Tape& t, const Tensor& g) {
        const Tensor& pv = t.value(ip);
        Tensor& d = t.accumulate(ip);
        const std::size_t width = pv.dim(2);
        for (std::size_t p = 0; p < wt->size(); ++p) {
          for (std::size_t c = 0; c < width; ++c) {
            const std::size_t q = p * width + c;
            d[q] += g[0] * 2.0 * (*wt)[p] * (pv[q] - (*tg)[q]);
          }
        }
      });
}

}  // namespace phasemotion
