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

#include "subpool/subspace_pooling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "subpool/error.hpp"

namespace subpool {

FeatureMap::FeatureMap(std::size_t c, std::size_t h, std::size_t w, Matrix a)
    : channels(c), height(h), width(w), values(std::move(a)) {
  if (c == 0 || h == 0 || w == 0) throw InvalidArgument("FeatureMap: zero dimension");
  if (values.rows() != c || values.cols() != h * w) {
    throw InvalidArgument("FeatureMap: matrix is " + std::to_string(values.rows()) + "x" +
                          std::to_string(values.cols()) + ", expected " + std::to_string(c) + "x" +
                          std::to_string(h * w));
  }
  if (!all_finite(values)) throw NumericError("FeatureMap: non-finite entry");
}

std::pair<Matrix, std::vector<double>> canonicalize_signs(const Matrix& u) {
  Matrix out = u;
  std::vector<double> signs(u.cols(), 1.0);
  for (std::size_t j = 0; j < u.cols(); ++j) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double mag = std::abs(u(i, j));
      if (mag > best) {
        best = mag;
        arg = i;
      }
    }
    if (u.rows() > 0 && u(arg, j) < 0.0) {
      signs[j] = -1.0;
      for (std::size_t i = 0; i < u.rows(); ++i) out(i, j) = -u(i, j);
    }
  }
  return {std::move(out), std::move(signs)};
}

PoolResult pool_forward(const FeatureMap& fm, std::size_t k) {
  const std::size_t c = fm.channels;
  const std::size_t n = fm.locations();
  if (k == 0 || k > std::min(c, n)) {
    throw InvalidArgument("pool_forward: rank " + std::to_string(k) + " outside [1, min(" +
                          std::to_string(c) + ", " + std::to_string(n) + ")]");
  }
  SvdFactors f = svd(fm.values);

  const double s1 = f.S.front();
  if (!(f.S[k - 1] > kRankTolerance * s1)) {
    std::size_t numerical_rank = 0;
    for (double s : f.S)
      if (s > kRankTolerance * s1) ++numerical_rank;
    throw RankError("pool_forward: feature map has numerical rank " + std::to_string(numerical_rank) +
                        ", below requested rank " + std::to_string(k),
                    numerical_rank);
  }

  auto [basis, signs] = canonicalize_signs(f.U.leading_cols(k));
  PoolResult out;
  out.descriptor.k = k;
  out.descriptor.basis = std::move(basis);
  out.descriptor.sigma.assign(f.S.begin(), f.S.begin() + static_cast<std::ptrdiff_t>(k));
  out.cache.factors = std::move(f);
  out.cache.k = k;
  out.cache.signs = std::move(signs);
  out.cache.channels = c;
  out.cache.height = fm.height;
  out.cache.width = fm.width;
  return out;
}

PoolResult pool_forward(const Matrix& a, std::size_t k) {
  return pool_forward(FeatureMap(a.rows(), 1, a.cols(), a), k);
}

Matrix pool_backward(const PoolCache& cache, const Matrix& grad_basis) {
  const Matrix& U = cache.factors.U;
  const Matrix& V = cache.factors.V;
  const auto& S = cache.factors.S;
  const std::size_t c = U.rows();
  const std::size_t r = S.size();
  const std::size_t k = cache.k;
  if (grad_basis.rows() != c || grad_basis.cols() != k) {
    throw InvalidArgument("pool_backward: upstream gradient is " + std::to_string(grad_basis.rows()) + "x" +
                          std::to_string(grad_basis.cols()) + ", expected " + std::to_string(c) + "x" +
                          std::to_string(k));
  }
  if (!all_finite(grad_basis)) throw NumericError("pool_backward: non-finite upstream gradient");

  // Undo the sign canonicalization: d/dU_raw = d/dU_canon * diag(signs).
  Matrix gu = grad_basis;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < k; ++j) gu(i, j) *= cache.signs[j];

  // J = U^T gU, r x k (columns beyond k of the full upstream gradient are zero).
  const Matrix J = matmul_tn(U, gu);

  const double eps = kBackwardBroadening * std::pow(S.front(), 4);
  auto coupling = [&](std::size_t i, std::size_t j) {
    const double d = S[j] * S[j] - S[i] * S[i];
    return d / (d * d + eps);
  };

  // Inner r x r matrix M = (F o (J - J^T)) diag(S). J is zero outside the
  // first k columns, so only rows or columns < k carry non-zeros.
  Matrix inner(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      if (i == j || (i >= k && j >= k)) continue;
      const double jij = j < k ? J(i, j) : 0.0;
      const double jji = i < k ? J(j, i) : 0.0;
      inner(i, j) = coupling(i, j) * (jij - jji) * S[j];
    }
  }
  Matrix grad = matmul_nt(matmul(U, inner), V);

  // Component of the upstream gradient outside span(U); only present when
  // U is not square (c > h*w).
  if (c > r) {
    Matrix residual = gu - matmul(U, J);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < k; ++j) residual(i, j) /= S[j];
    grad += matmul_nt(residual, V.leading_cols(k));
  }
  return grad;
}

std::vector<double> flatten(const Matrix& basis) {
  std::vector<double> out;
  out.reserve(basis.size());
  for (std::size_t j = 0; j < basis.cols(); ++j)
    for (std::size_t i = 0; i < basis.rows(); ++i) out.push_back(basis(i, j));
  return out;
}

std::vector<double> flatten(const SubspaceDescriptor& d) { return flatten(d.basis); }

Matrix unflatten(std::span<const double> values, std::size_t channels) {
  if (channels == 0 || values.size() % channels != 0) {
    throw InvalidArgument("unflatten: " + std::to_string(values.size()) + " values do not split into " +
                          std::to_string(channels) + " rows");
  }
  const std::size_t k = values.size() / channels;
  Matrix m(channels, k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < channels; ++i) m(i, j) = values[j * channels + i];
  return m;
}

double projection_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("projection_distance: bases have different shapes");
  }
  const Matrix diff = matmul_nt(a, a) - matmul_nt(b, b);
  return frobenius_norm(diff) / std::sqrt(2.0);
}

double projection_distance(const SubspaceDescriptor& a, const SubspaceDescriptor& b) {
  return projection_distance(a.basis, b.basis);
}

Matrix orthonormalize(const Matrix& a, std::size_t k) {
  SvdFactors f = svd(a);
  return canonicalize_signs(f.U.leading_cols(k)).first;
}

}  // namespace subpool
