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

// Subspace pooling: a c x (h*w) convolutional feature map is replaced by the
// orthonormal basis of its dominant k-dimensional left-singular subspace.

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "subpool/numerics.hpp"

namespace subpool {

/// A c x h x w feature map stored as the c x (h*w) matrix whose row i is
/// channel i unrolled and whose column j is the c-dim feature at location j.
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Matrix values;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t h, std::size_t w, Matrix a);

  std::size_t locations() const { return height * width; }
};

/// Sign-canonical orthonormal basis U_k (c x k) plus the retained singular
/// values, which are carried for diagnostics only.
struct SubspaceDescriptor {
  std::size_t k = 0;
  Matrix basis;
  std::vector<double> sigma;

  std::size_t channels() const { return basis.rows(); }
};

/// Everything the backward pass needs: the full thin SVD of the input, the
/// retained rank and the +-1 applied to each retained column.
struct PoolCache {
  SvdFactors factors;
  std::size_t k = 0;
  std::vector<double> signs;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

struct PoolResult {
  SubspaceDescriptor descriptor;
  PoolCache cache;
};

/// Relative threshold below which sigma_k counts as zero.
inline constexpr double kRankTolerance = 1e-12;
/// Lorentzian broadening of the spectral coupling, relative to sigma_1^4.
inline constexpr double kBackwardBroadening = 1e-10;

/// Top-k left singular vectors of `fm`, sign-canonicalized.
/// Throws InvalidArgument if k is 0 or exceeds min(c, h*w), RankError if
/// sigma_k <= 1e-12 * sigma_1.
PoolResult pool_forward(const FeatureMap& fm, std::size_t k);
/// Same, for a bare c x n matrix (height 1, width n).
PoolResult pool_forward(const Matrix& a, std::size_t k);

/// Gradient of the loss with respect to the feature matrix, given the
/// gradient with respect to the (canonicalized) basis. Returns c x (h*w).
///
/// Uses truncated-SVD differentiation with the coupling
/// F_ij = (s_j^2 - s_i^2) / ((s_j^2 - s_i^2)^2 + eps), eps = 1e-10 * s_1^4,
/// which equals 1/(s_j^2 - s_i^2) away from degeneracies and stays finite
/// near them.
Matrix pool_backward(const PoolCache& cache, const Matrix& grad_basis);

/// Scales each column by +-1 so its largest-magnitude entry is
/// non-negative (lowest row index wins ties). Returns the signs applied.
std::pair<Matrix, std::vector<double>> canonicalize_signs(const Matrix& u);

/// Column-major concatenation: (u_1, u_2, ..., u_k), length c*k.
std::vector<double> flatten(const SubspaceDescriptor& d);
std::vector<double> flatten(const Matrix& basis);
/// Inverse of flatten for a basis with `channels` rows.
Matrix unflatten(std::span<const double> values, std::size_t channels);

/// (1/sqrt 2) * ||U1 U1^T - U2 U2^T||_F, in [0, sqrt k] for orthonormal
/// inputs. Invariant to column signs and to rotations within each basis.
double projection_distance(const SubspaceDescriptor& a, const SubspaceDescriptor& b);
double projection_distance(const Matrix& a, const Matrix& b);

/// Orthonormal basis for the dominant k-dim column space of an arbitrary
/// c x k' matrix (used to re-project averaged descriptors).
Matrix orthonormalize(const Matrix& a, std::size_t k);

}  // namespace subpool
