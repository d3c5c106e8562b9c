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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phasemotion/gradcheck.hpp"
#include "phasemotion/refiner.hpp"

namespace pm = phasemotion;
using pm::Shape;
using pm::Tensor;

namespace {

Tensor random(pm::Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  return pm::detail::random_tensor(rng, std::move(s), lo, hi);
}

pm::ProjectionWeights random_weights(pm::Rng& rng) {
  return {random(rng, {3, 3}), random(rng, {3}), random(rng, {3, 3}), random(rng, {3})};
}

Tensor loop_affinity(const Tensor& g, const Tensor& p) {
  const std::size_t k = g.dim(1);
  Tensor a(Shape{k, k});
  for (std::size_t q = 0; q < k; ++q) {
    double denom = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
      double l = 0.0;
      for (std::size_t c = 0; c < 3; ++c) l += g(c, q) * p(c, r);
      a(q, r) = std::exp(l);
      denom += a(q, r);
    }
    for (std::size_t r = 0; r < k; ++r) a(q, r) /= denom;
  }
  return a;
}

Tensor loop_refine(const Tensor& disp, const Tensor& a) {
  const std::size_t n = disp.dim(0), nj = disp.dim(1);
  Tensor out = disp;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < nj; ++j)
      for (std::size_t c = 0; c < 3; ++c) {
        double s = 0.0;
        for (std::size_t i2 = 0; i2 < n; ++i2)
          for (std::size_t j2 = 0; j2 < nj; ++j2) s += a(i * nj + j, i2 * nj + j2) * disp(i2, j2, c);
        out(i, j, c) += s;
      }
  return out;
}

}  // namespace

TEST(Project, IdentityWeightsReshape) {
  pm::Rng rng(1);
  const Tensor disp = random(rng, {2, 3, 3});
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto f = pm::project(disp, {eye, Tensor(Shape{3}), eye, Tensor(Shape{3})});
  ASSERT_EQ(f.gamma.shape(), (Shape{3, 6}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(f.gamma(c, i * 3 + j), disp(i, j, c));
  EXPECT_EQ(f.phi, f.gamma);
  const auto z = pm::project(disp, {Tensor(Shape{3, 3}), Tensor(Shape{3}), Tensor(Shape{3, 3}), Tensor(Shape{3})});
  EXPECT_EQ(z.gamma, Tensor(Shape{3, 6}));
  EXPECT_EQ(z.phi, Tensor(Shape{3, 6}));
}

TEST(Project, FlattenOrderIndexOracle) {
  const std::size_t n = 4, nj = 5;
  Tensor disp(Shape{n, nj, 3});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < nj; ++j) disp(i, j, 0) = double(1000 * i + j);
  const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto f = pm::project(disp, {eye, Tensor(Shape{3}), eye, Tensor(Shape{3})});
  for (std::size_t q = 0; q < n * nj; ++q) {
    EXPECT_EQ(f.gamma(0, q), double(1000 * (q / nj) + q % nj)) << q;
  }
  EXPECT_EQ(f.gamma(0, 0), 0.0);
  EXPECT_EQ(f.gamma(0, nj - 1), double(nj - 1));
  EXPECT_EQ(f.gamma(0, nj), 1000.0);
}

TEST(Affinity, UniformAndSingleton) {
  const Tensor a = pm::affinity({Tensor(Shape{3, 5}), Tensor(Shape{3, 5})});
  for (double v : a.data()) EXPECT_DOUBLE_EQ(v, 0.2);
  pm::Rng rng(2);
  const Tensor one = pm::affinity({random(rng, {3, 1}, -50, 50), random(rng, {3, 1}, -50, 50)});
  EXPECT_EQ(one, Tensor(Shape{1, 1}, 1.0));
}

TEST(Affinity, MatchesLoopOracle) {
  pm::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor g = random(rng, {3, 12}), p = random(rng, {3, 12});
    const Tensor a = pm::affinity({g, p});
    EXPECT_LE(pm::max_abs_diff(a, loop_affinity(g, p)), 1e-12);
    for (std::size_t q = 0; q < 12; ++q) {
      double s = 0.0;
      for (std::size_t r = 0; r < 12; ++r) s += a(q, r);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Affinity, ColumnNormalisation) {
  pm::Rng rng(4);
  const Tensor g = random(rng, {3, 7}), p = random(rng, {3, 7});
  const Tensor a = pm::affinity({g, p}, pm::AffinityNorm::columns);
  for (std::size_t r = 0; r < 7; ++r) {
    double s = 0.0;
    for (std::size_t q = 0; q < 7; ++q) s += a(q, r);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // Column softmax of γᵀφ is the transpose of row softmax of φᵀγ.
  EXPECT_LE(pm::max_abs_diff(a, pm::transpose(loop_affinity(p, g))), 1e-12);
}

TEST(Affinity, RecordedMatchesPlain) {
  pm::Rng rng(5);
  for (auto norm : {pm::AffinityNorm::rows, pm::AffinityNorm::columns}) {
    const Tensor g = random(rng, {9, 3}, -3, 3), p = random(rng, {9, 3}, -3, 3);
    pm::Tape tape;
    const Tensor rec = pm::affinity(tape.variable(g), tape.variable(p), norm).value();
    EXPECT_LE(pm::max_abs_diff(rec, pm::affinity({pm::transpose(g), pm::transpose(p)}, norm)), 1e-15);
  }
}

TEST(Refine, ConstantFieldDoubles) {
  pm::Rng rng(6);
  Tensor disp(Shape{3, 4, 3});
  for (std::size_t q = 0; q < 12; ++q) {
    disp[3 * q] = 1.5;
    disp[3 * q + 1] = -2.0;
    disp[3 * q + 2] = 0.25;
  }
  Tensor a = pm::softmax_rows(random(rng, {12, 12}, -4, 4));
  const Tensor out = pm::refine(disp, a);
  Tensor twice = disp;
  twice *= 2.0;
  EXPECT_LE(pm::max_abs_diff(out, twice), 1e-15);
  EXPECT_EQ(pm::refine(Tensor(Shape{3, 4, 3}), a), Tensor(Shape{3, 4, 3}));
}

TEST(Refine, MatchesDoubleLoopOracle) {
  pm::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(4), nj = 1 + rng.below(4);
    const Tensor disp = random(rng, {n, nj, 3}, -10, 10);
    const Tensor a = pm::softmax_rows(random(rng, {n * nj, n * nj}, -3, 3));
    EXPECT_LE(pm::max_abs_diff(pm::refine(disp, a), loop_refine(disp, a)), 1e-12);
    pm::Tape tape;
    const Tensor rec = pm::refine(tape.variable(disp), tape.variable(a)).value();
    EXPECT_LE(pm::max_abs_diff(rec, loop_refine(disp, a)), 1e-12);
  }
}

TEST(Refine, UniformAffinityAddsMean) {
  pm::Rng rng(8);
  const Tensor disp = random(rng, {5, 3, 3}, -10, 10);
  const Tensor a(Shape{15, 15}, 1.0 / 15.0);
  const Tensor out = pm::refine(disp, a);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t q = 0; q < 15; ++q) mean += disp[3 * q + c] / 15.0;
    for (std::size_t q = 0; q < 15; ++q) EXPECT_NEAR(out[3 * q + c], disp[3 * q + c] + mean, 1e-12);
  }
}

TEST(Refine, LinearInDisplacementForFrozenAffinity) {
  pm::Rng rng(9);
  const Tensor x = random(rng, {2, 4, 3}), y = random(rng, {2, 4, 3});
  const Tensor a = pm::softmax_rows(random(rng, {8, 8}));
  Tensor combo(Shape{2, 4, 3});
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.5 * x[i] - 0.75 * y[i];
  const Tensor rx = pm::refine(x, a), ry = pm::refine(y, a), rc = pm::refine(combo, a);
  for (std::size_t i = 0; i < combo.size(); ++i) EXPECT_NEAR(rc[i], 2.5 * rx[i] - 0.75 * ry[i], 1e-12);
}

TEST(Refine, ShapeMismatch) {
  EXPECT_THROW(pm::refine(Tensor(Shape{2, 2, 3}), Tensor(Shape{3, 3})), pm::DimensionError);
  EXPECT_THROW(pm::refine(Tensor(Shape{2, 2, 2}), Tensor(Shape{4, 4})), pm::DimensionError);
}

TEST(Refine, EndToEndGradient) {
  pm::Rng rng(10);
  for (auto norm : {pm::AffinityNorm::rows, pm::AffinityNorm::columns}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor c = random(rng, {3, 2, 3});
      const double err = pm::check_gradient(
          [&](pm::Tape& t, const std::vector<pm::Var>& v) {
            pm::Var rows = pm::reshape(v[0], Shape{6, 3});
            pm::Var a = pm::affinity(pm::affine(rows, v[1], v[2]), pm::affine(rows, v[3], v[4]), norm);
            return pm::sum(pm::mul(pm::refine(v[0], a), t.constant(c)));
          },
          {random(rng, {3, 2, 3}), random(rng, {3, 3}), random(rng, {3}), random(rng, {3, 3}),
           random(rng, {3})});
      EXPECT_LT(err, 1e-4);
    }
  }
}

TEST(Refine, MatrixDumpIsRowMajor) {
  const auto path = std::filesystem::temp_directory_path() / "phasemotion_affinity_dump.txt";
  pm::write_matrix(path.string(), Tensor::matrix({{0.25, 0.75}, {1, 0}}));
  std::ifstream in(path);
  std::string l1, l2;
  std::getline(in, l1);
  std::getline(in, l2);
  EXPECT_EQ(l1, "0.25 0.75");
  EXPECT_EQ(l2, "1 0");
  std::filesystem::remove(path);
}
