// Copyright 2026 The subpool Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <random>

#include "doctest.h"
#include "subpool/error.hpp"
#include "subpool/subspace_pooling.hpp"
#include "test_support.hpp"

using namespace subpool;
using namespace subpool::testing;

namespace {

// sqrt(k - |U1^T U2|_F^2), equal to the projector distance for orthonormal
// bases with the same k.
double projection_oracle(const Matrix& u1, const Matrix& u2) {
  const Matrix g = naive_matmul(naive_transpose(u1), u2);
  double s = 0.0;
  for (double v : g.data()) s += v * v;
  return std::sqrt(std::max(0.0, static_cast<double>(u1.cols()) - s));
}

Matrix random_orthonormal(std::size_t c, std::size_t k, std::mt19937_64& rng) {
  return svd(gaussian(c, k, rng)).U;
}

}  // namespace

TEST_CASE("pooled basis is orthonormal and sign canonical") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + rng() % 10, h = 1 + rng() % 4, w = 1 + rng() % 4;
    const std::size_t k = 1 + rng() % std::min(c, h * w);
    const FeatureMap fm(c, h, w, gaussian(c, h * w, rng));
    const PoolResult r = pool_forward(fm, k);
    const Matrix& u = r.descriptor.basis;
    REQUIRE(u.rows() == c);
    REQUIRE(u.cols() == k);
    CHECK(max_abs_diff(naive_matmul(naive_transpose(u), u), Matrix::identity(k)) <= 1e-10);
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t arg = 0;
      for (std::size_t i = 1; i < c; ++i)
        if (std::abs(u(i, j)) > std::abs(u(arg, j))) arg = i;
      CHECK(u(arg, j) >= 0.0);
    }
    CHECK(r.descriptor.sigma.size() == k);
  }
}

TEST_CASE("k = c on a square map spans the whole channel space") {
  std::mt19937_64 rng(12);
  const Matrix a = gaussian(4, 4, rng);
  const Matrix u = pool_forward(a, 4).descriptor.basis;
  CHECK(max_abs_diff(naive_matmul(u, naive_transpose(u)), Matrix::identity(4)) <= 1e-10);
}

TEST_CASE("sign canonicalization flips to a non-negative largest entry, lowest row on ties") {
  Matrix u(3, 2, std::vector<double>{0.5, -0.6, -0.5, 0.6, 0.1, 0.1});
  auto [canon, signs] = canonicalize_signs(u);
  // column 0: |0.5| tie between rows 0 and 1, row 0 is positive already
  CHECK(signs[0] == 1.0);
  // column 1: tie between rows 0 and 1, row 0 is negative
  CHECK(signs[1] == -1.0);
  CHECK(canon(0, 1) == 0.6);
}

TEST_CASE("invalid rank and degenerate maps are reported") {
  std::mt19937_64 rng(13);
  const Matrix a = gaussian(3, 5, rng);
  CHECK_THROWS_AS(pool_forward(a, 0), InvalidArgument);
  CHECK_THROWS_AS(pool_forward(a, 4), InvalidArgument);
  CHECK_THROWS_AS(pool_forward(Matrix(3, 5), 1), RankError);
  const Matrix rank1 = naive_matmul(gaussian(3, 1, rng), gaussian(1, 5, rng));
  try {
    pool_forward(rank1, 2);
    FAIL("expected RankError");
  } catch (const RankError& e) {
    CHECK(e.numerical_rank() == 1);
  }
  CHECK_THROWS_AS(FeatureMap(2, 2, 2, Matrix(2, 3)), InvalidArgument);
}

TEST_CASE("residual of the rank-k projection is the tail of the spectrum") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 3 + rng() % 6, n = 3 + rng() % 6;
    const std::size_t k = 1 + rng() % (std::min(c, n) - 1);
    const Matrix a = gaussian(c, n, rng);
    const PoolResult r = pool_forward(a, k);
    const Matrix& u = r.descriptor.basis;
    const Matrix residual = a - naive_matmul(u, naive_matmul(naive_transpose(u), a));
    double tail = 0.0;
    for (std::size_t i = k; i < r.cache.factors.S.size(); ++i) tail += r.cache.factors.S[i] * r.cache.factors.S[i];
    CHECK(std::abs(frobenius_norm(residual) - std::sqrt(tail)) <= 1e-9);
  }
}

TEST_CASE("projection distance matches the Gram oracle and its invariances") {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t c = 3 + rng() % 8, k = 1 + rng() % 3;
    const Matrix u1 = random_orthonormal(c, k, rng), u2 = random_orthonormal(c, k, rng);
    const double d = projection_distance(u1, u2);
    // compare squares: the oracle cancels badly when the subspaces nearly coincide
    const double o = projection_oracle(u1, u2);
    CHECK(std::abs(d * d - o * o) <= 1e-12);
    CHECK(d <= std::sqrt(static_cast<double>(k)) + 1e-12);
    CHECK(std::abs(d - projection_distance(u2, u1)) <= 1e-15);
    // rotating within the subspace changes nothing
    const Matrix rot = random_orthonormal(k, k, rng);
    CHECK(std::abs(projection_distance(naive_matmul(u1, rot), u2) - d) <= 1e-12);
    CHECK(projection_distance(u1, u1) <= 1e-7);
  }
  // orthogonal subspaces are sqrt(k) apart
  const Matrix e = Matrix::identity(4);
  CHECK(projection_distance(e.leading_cols(2), Matrix::from_columns(4, {e.col(2), e.col(3)})) ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
}

TEST_CASE("flatten is column-major and round-trips") {
  std::mt19937_64 rng(16);
  const Matrix u = random_orthonormal(5, 3, rng);
  const auto v = flatten(u);
  REQUIRE(v.size() == 15);
  CHECK(v[0] == u(0, 0));
  CHECK(v[5] == u(0, 1));
  CHECK(unflatten(v, 5) == u);
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  CHECK(norm2 == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(unflatten(v, 4), InvalidArgument);
}

TEST_CASE("orthonormalize returns the dominant column space") {
  std::mt19937_64 rng(17);
  const Matrix u = random_orthonormal(6, 2, rng);
  const Matrix q = orthonormalize(2.0 * u, 2);
  CHECK(projection_distance(q, u) <= 1e-7);
}

TEST_CASE("pooling backward matches central differences") {
  std::mt19937_64 rng(18);
  for (auto [c, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{4, 7, 2}, {7, 4, 3}, {5, 5, 1}}) {
    Matrix a = gaussian(c, n, rng);
    const Matrix w = gaussian(c, k, rng);
    const Matrix analytic = pool_backward(pool_forward(a, k).cache, w);
    const Matrix numeric = finite_difference(a, 1e-6, [&] {
      const Matrix u = pool_forward(a, k).descriptor.basis;
      double s = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) s += u.data()[i] * w.data()[i];
      return s;
    });
    CHECK(relative_max_error(analytic, numeric) <= 1e-6);
  }
}

TEST_CASE("zero upstream gradient gives zero input gradient") {
  std::mt19937_64 rng(19);
  const PoolResult r = pool_forward(gaussian(4, 6, rng), 2);
  CHECK(max_abs(pool_backward(r.cache, Matrix(4, 2))) == 0.0);
}
