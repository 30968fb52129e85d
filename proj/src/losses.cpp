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

#include "subpool/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "subpool/error.hpp"

namespace subpool {

LossResult cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  const std::size_t t = logits.cols();
  if (n == 0 || t == 0) throw InvalidArgument("cross_entropy: empty logits");
  if (labels.size() != n) {
    throw InvalidArgument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " rows");
  }
  if (!all_finite(logits)) throw NumericError("cross_entropy: non-finite logits");

  LossResult out{0.0, Matrix(n, t)};
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= t) {
      throw InvalidArgument("cross_entropy: label " + std::to_string(y) + " at row " + std::to_string(i) +
                            " outside [0, " + std::to_string(t) + ")");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = std::log(z);
    total += log_z - (row[y] - mx);
    auto g = out.grad.row(i);
    for (std::size_t j = 0; j < t; ++j) g[j] = std::exp(row[j] - mx - log_z) * inv_n;
    g[y] -= inv_n;
  }
  out.loss = total * inv_n;
  return out;
}

Matrix pairwise_distances(const Matrix& embeddings) {
  // Direct differences rather than the Gram expansion: no cancellation for
  // nearby points, and batches are small.
  const std::size_t n = embeddings.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = embeddings.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto xj = embeddings.row(j);
      double q = 0.0;
      for (std::size_t c = 0; c < xi.size(); ++c) q += (xi[c] - xj[c]) * (xi[c] - xj[c]);
      d(i, j) = d(j, i) = std::sqrt(q + kDistanceStabilizer);
    }
    d(i, i) = std::sqrt(kDistanceStabilizer);
  }
  return d;
}

TripletBatch TripletBatch::make(Matrix embeddings, std::vector<int> labels, double margin) {
  if (embeddings.rows() != labels.size()) {
    throw InvalidArgument("TripletBatch: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(embeddings.rows()) + " embeddings");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("TripletBatch: margin must be >= 0");
  if (!all_finite(embeddings)) throw NumericError("TripletBatch: non-finite embeddings");

  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw InvalidArgument("TripletBatch: need at least 2 identities (P >= 2)");
  const std::size_t k = counts.begin()->second;
  for (const auto& [label, count] : counts) {
    if (count < 2) {
      throw InvalidArgument("TripletBatch: identity " + std::to_string(label) +
                            " has a single instance, no positive exists");
    }
    if (count != k) {
      throw InvalidArgument("TripletBatch: identity " + std::to_string(label) + " has " + std::to_string(count) +
                            " instances, expected K = " + std::to_string(k));
    }
  }
  TripletBatch b;
  b.embeddings_ = std::move(embeddings);
  b.labels_ = std::move(labels);
  b.margin_ = margin;
  b.p_ = counts.size();
  b.k_ = k;
  return b;
}

TripletMining batch_hard_mine(const Matrix& distances, std::span<const int> labels, double margin,
                              Reduction reduction) {
  const std::size_t n = labels.size();
  if (distances.rows() != n || distances.cols() != n) {
    throw InvalidArgument("batch_hard_mine: distance matrix does not match label count");
  }
  TripletMining out;
  out.grad_distances = Matrix(n, n);
  out.hardest_positive.assign(n, n);
  out.hardest_negative.assign(n, n);

  std::vector<double> per_anchor(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t pos = n, neg = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (pos == n || distances(a, j) > distances(a, pos)) pos = j;
      } else {
        if (neg == n || distances(a, j) < distances(a, neg)) neg = j;
      }
    }
    if (pos == n || neg == n) {
      throw InvalidArgument("batch_hard_mine: anchor " + std::to_string(a) + " lacks a positive or a negative");
    }
    out.hardest_positive[a] = pos;
    out.hardest_negative[a] = neg;
    const double hinge = distances(a, pos) - distances(a, neg) + margin;
    if (hinge > 0.0) {
      per_anchor[a] = hinge;
      ++out.active_anchors;
    }
  }

  long double total = 0.0L;
  for (double v : per_anchor) total += v;
  const double count = static_cast<double>(n);
  const double mean = static_cast<double>(total / static_cast<long double>(n));
  // sum is defined as N * mean so the two reductions agree to the bit.
  out.loss = reduction == Reduction::mean ? mean : count * mean;

  const double scale = reduction == Reduction::mean ? 1.0 / count : 1.0;
  for (std::size_t a = 0; a < n; ++a) {
    if (per_anchor[a] <= 0.0) continue;
    out.grad_distances(a, out.hardest_positive[a]) += scale;
    out.grad_distances(a, out.hardest_negative[a]) -= scale;
  }
  return out;
}

LossResult batch_hard_triplet(const TripletBatch& batch, Reduction reduction) {
  const Matrix& x = batch.embeddings();
  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  const Matrix dist = pairwise_distances(x);
  TripletMining mined = batch_hard_mine(dist, batch.labels(), batch.margin(), reduction);

  LossResult out{mined.loss, Matrix(n, dim)};
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = mined.grad_distances(a, j);
      if (g == 0.0) continue;
      // dD(a,j)/dx_a = (x_a - x_j) / D(a,j), and the mirror for x_j.
      const double s = g / dist(a, j);
      auto ga = out.grad.row(a);
      auto gj = out.grad.row(j);
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = x(a, c) - x(j, c);
        ga[c] += s * diff;
        gj[c] -= s * diff;
      }
    }
  }
  return out;
}

}  // namespace subpool
