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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "subpool/numerics.hpp"

namespace subpool {

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // same shape as the loss input
};

enum class Reduction { sum, mean };

/// Mean softmax cross-entropy over the rows of an N x T logit matrix.
/// grad = (softmax - onehot) / N.
LossResult cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Added under the square root of every pairwise distance so the gradient
/// stays finite when two embeddings coincide.
inline constexpr double kDistanceStabilizer = 1e-16;

/// N x N Euclidean distances sqrt(max(0, |a|^2 + |b|^2 - 2 a.b) + 1e-16).
Matrix pairwise_distances(const Matrix& embeddings);

/// P identities x K instances. Built through make(), which enforces the layout.
class TripletBatch {
 public:
  /// Throws InvalidArgument unless every distinct label appears the same
  /// number of times K >= 2 and there are P >= 2 distinct labels.
  static TripletBatch make(Matrix embeddings, std::vector<int> labels, double margin);

  const Matrix& embeddings() const { return embeddings_; }
  const std::vector<int>& labels() const { return labels_; }
  double margin() const { return margin_; }
  std::size_t identities() const { return p_; }
  std::size_t instances() const { return k_; }

 private:
  TripletBatch() = default;
  Matrix embeddings_;
  std::vector<int> labels_;
  double margin_ = 0.0;
  std::size_t p_ = 0;
  std::size_t k_ = 0;
};

/// Hardest-positive / hardest-negative selection for every anchor.
struct TripletMining {
  double loss = 0.0;
  Matrix grad_distances;  // dL/dD, N x N
  std::vector<std::size_t> hardest_positive;
  std::vector<std::size_t> hardest_negative;
  std::size_t active_anchors = 0;
};

/// Batch-hard mining on a precomputed distance matrix:
/// sum over anchors of max(0, max_p D(a,p) - min_n D(a,n) + margin),
/// optionally divided by N. Ties go to the lowest index; the gradient is
/// routed only to the selected pair of each active anchor.
TripletMining batch_hard_mine(const Matrix& distances, std::span<const int> labels, double margin,
                              Reduction reduction);

/// Batch-hard triplet loss over Euclidean distances, with gradient with
/// respect to the embeddings.
LossResult batch_hard_triplet(const TripletBatch& batch, Reduction reduction = Reduction::mean);

}  // namespace subpool
