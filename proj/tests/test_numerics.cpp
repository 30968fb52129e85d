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
#include <limits>
#include <random>

#include "doctest.h"
#include "subpool/error.hpp"
#include "subpool/numerics.hpp"
#include "test_support.hpp"

using namespace subpool;
using namespace subpool::testing;

namespace {

// Cyclic two-sided Jacobi eigenvalue iteration for a symmetric matrix.
// Returns the eigenvalues in descending order.
std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

Matrix reconstruct(const SvdFactors& f) {
  Matrix us = f.U;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= f.S[j];
  return naive_matmul(us, naive_transpose(f.V));
}

double orthonormality_error(const Matrix& q) {
  return max_abs_diff(naive_matmul(naive_transpose(q), q), Matrix::identity(q.cols()));
}

}  // namespace

TEST_CASE("matrix products agree with the triple loop") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 7, n = 1 + rng() % 7;
    const Matrix a = gaussian(m, k, rng), b = gaussian(k, n, rng);
    CHECK(max_abs_diff(matmul(a, b), naive_matmul(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(naive_transpose(a), b), naive_matmul(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, naive_transpose(b)), naive_matmul(a, b)) < 1e-12);
  }
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), InvalidArgument);
}

TEST_CASE("basic matrix helpers") {
  Matrix a(2, 3, std::vector<double>{1, -2, 3, -4, 5, -6});
  CHECK(a.transposed() == naive_transpose(a));
  CHECK(a.leading_cols(2) == Matrix(2, 2, std::vector<double>{1, -2, -4, 5}));
  CHECK(max_abs(a) == 6.0);
  CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(91.0)));
  CHECK(a.col(1) == std::vector<double>{-2, 5});
  Matrix b = a;
  b(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK(all_finite(a));
  CHECK_FALSE(all_finite(b));
  CHECK((a + a) == 2.0 * a);
  CHECK((a - a) == Matrix(2, 3));
}

TEST_CASE("identity matrix has unit singular values and U = V = I") {
  const SvdFactors f = svd(Matrix::identity(3));
  CHECK(f.S == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(max_abs_diff(f.U, Matrix::identity(3)) == 0.0);
  CHECK(max_abs_diff(f.V, Matrix::identity(3)) == 0.0);
}

TEST_CASE("squared singular values are the eigenvalues of A A^T") {
  std::mt19937_64 rng(2);
  const Matrix a = gaussian(4, 6, rng);
  const SvdFactors f = svd(a);
  const auto ev = symmetric_eigenvalues(naive_matmul(a, naive_transpose(a)));
  REQUIRE(f.S.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(f.S[i] * f.S[i] - ev[i]) <= 1e-9);
}

TEST_CASE("random shapes reconstruct with orthonormal factors") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 1 + rng() % 12, n = 1 + rng() % 12;
    const Matrix a = gaussian(m, n, rng);
    const SvdFactors f = svd(a);
    const std::size_t r = std::min(m, n);
    REQUIRE(f.U.rows() == m);
    REQUIRE(f.U.cols() == r);
    REQUIRE(f.V.rows() == n);
    REQUIRE(f.V.cols() == r);
    CHECK(max_abs_diff(reconstruct(f), a) <= 1e-10 * std::max(1.0, f.S[0]));
    CHECK(orthonormality_error(f.U) <= 1e-10);
    CHECK(orthonormality_error(f.V) <= 1e-10);
    for (std::size_t i = 0; i + 1 < r; ++i) CHECK(f.S[i] >= f.S[i + 1]);
    CHECK(f.S.back() >= 0.0);
  }
}

TEST_CASE("rank-deficient input keeps a complete orthonormal U") {
  std::mt19937_64 rng(4);
  const Matrix low = naive_matmul(gaussian(6, 2, rng), gaussian(2, 5, rng));
  const SvdFactors f = svd(low);
  CHECK(f.S[2] <= 1e-12 * f.S[0]);
  CHECK(orthonormality_error(f.U) <= 1e-10);
  CHECK(max_abs_diff(reconstruct(f), low) <= 1e-10);

  const SvdFactors z = svd(Matrix(3, 4));
  CHECK(z.S == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(orthonormality_error(z.U) <= 1e-12);
}

TEST_CASE("svd rejects non-finite input and is deterministic") {
  Matrix a(2, 2, 1.0);
  a(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(svd(a), NumericError);

  std::mt19937_64 rng(5);
  const Matrix b = gaussian(7, 5, rng);
  const SvdFactors f1 = svd(b), f2 = svd(b);
  CHECK(f1.U == f2.U);
  CHECK(f1.S == f2.S);
  CHECK(f1.V == f2.V);
}
