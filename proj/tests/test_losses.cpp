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
#include "subpool/losses.hpp"
#include "test_support.hpp"

using namespace subpool;
using namespace subpool::testing;

namespace {

// -log(softmax) summed directly in long double.
double cross_entropy_oracle(const Matrix& logits, const std::vector<int>& labels) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    long double z = 0.0L;
    for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(static_cast<long double>(logits(i, j)));
    total += -std::log(std::exp(static_cast<long double>(logits(i, labels[i]))) / z);
  }
  return static_cast<double>(total / logits.rows());
}

std::vector<int> pk_labels(std::size_t p, std::size_t k) {
  std::vector<int> labels;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) labels.push_back(static_cast<int>(i));
  return labels;
}

}  // namespace

TEST_CASE("cross entropy matches the direct formula") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 6, t = 2 + rng() % 6;
    const Matrix logits = gaussian(n, t, rng, 3.0);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng() % t);
    const LossResult r = cross_entropy(logits, labels);
    CHECK(std::abs(r.loss - cross_entropy_oracle(logits, labels)) <= 1e-12);
    // softmax - onehot rows sum to zero
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double g : r.grad.row(i)) s += g;
      CHECK(std::abs(s) <= 1e-15);
    }
  }
}

TEST_CASE("cross entropy edge cases") {
  const std::vector<int> zero = {0};
  CHECK(cross_entropy(Matrix(1, 2), zero).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(cross_entropy(Matrix(1, 3, std::vector<double>{1000, 0, 0}), zero).loss <= 1e-300);
  CHECK(std::isfinite(cross_entropy(Matrix(1, 2, std::vector<double>{-1000, 1000}), zero).loss));
  const std::vector<int> bad = {2};
  CHECK_THROWS_AS(cross_entropy(Matrix(1, 2), bad), InvalidArgument);
  CHECK_THROWS_AS(cross_entropy(Matrix(2, 2), zero), InvalidArgument);
}

TEST_CASE("cross entropy gradient matches central differences") {
  std::mt19937_64 rng(22);
  Matrix logits = gaussian(4, 5, rng);
  const std::vector<int> labels = {0, 4, 2, 2};
  const Matrix numeric = finite_difference(logits, 1e-5, [&] { return cross_entropy(logits, labels).loss; });
  CHECK(relative_max_error(cross_entropy(logits, labels).grad, numeric) <= 1e-8);
}

TEST_CASE("pairwise distances are symmetric with a stabilized zero diagonal") {
  std::mt19937_64 rng(23);
  const Matrix x = gaussian(6, 3, rng);
  const Matrix d = pairwise_distances(x);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(d(i, i) == std::sqrt(kDistanceStabilizer));
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(d(i, j) == d(j, i));
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      if (i != j) CHECK(d(i, j) == doctest::Approx(std::sqrt(s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("batch layout is validated") {
  const Matrix x(4, 2);
  CHECK_THROWS_AS(TripletBatch::make(x, {0, 0, 0, 0}, 0.3), InvalidArgument);  // P = 1
  CHECK_THROWS_AS(TripletBatch::make(x, {0, 1, 1, 1}, 0.3), InvalidArgument);  // lone anchor
  CHECK_THROWS_AS(TripletBatch::make(Matrix(5, 2), {0, 0, 1, 1, 1}, 0.3), InvalidArgument);  // unequal K
  CHECK_THROWS_AS(TripletBatch::make(x, {0, 0, 1}, 0.3), InvalidArgument);
  const TripletBatch b = TripletBatch::make(x, {0, 1, 0, 1}, 0.3);
  CHECK(b.identities() == 2);
  CHECK(b.instances() == 2);
}

TEST_CASE("identical embeddings give N * m under sum and m under mean") {
  const TripletBatch b = TripletBatch::make(Matrix(4, 3, 0.7), pk_labels(2, 2), 0.3);
  CHECK(batch_hard_triplet(b, Reduction::sum).loss == 1.2);
  CHECK(batch_hard_triplet(b, Reduction::mean).loss == 0.3);
}

TEST_CASE("well separated clusters give zero loss and zero gradient") {
  Matrix x(4, 1, std::vector<double>{0.0, 0.01, 10.0, 10.01});
  const LossResult r = batch_hard_triplet(TripletBatch::make(x, pk_labels(2, 2), 0.3));
  CHECK(r.loss == 0.0);
  CHECK(max_abs(r.grad) == 0.0);
}

TEST_CASE("hardest positive excludes the anchor, ties resolve to the lowest index") {
  // all distances equal except the anchor itself
  const Matrix d(4, 4, 1.0);
  const std::vector<int> labels = {0, 0, 1, 1};
  const TripletMining m = batch_hard_mine(d, labels, 0.3, Reduction::mean);
  CHECK(m.hardest_positive[0] == 1);
  CHECK(m.hardest_negative[0] == 2);
  CHECK(m.hardest_positive[1] == 0);
  CHECK(m.hardest_negative[3] == 0);
  CHECK(m.active_anchors == 4);
}

TEST_CASE("triplet gradient matches central differences") {
  std::mt19937_64 rng(24);
  for (Reduction red : {Reduction::mean, Reduction::sum}) {
    Matrix x = gaussian(9, 4, rng);
    const auto labels = pk_labels(3, 3);
    const auto loss = [&] { return batch_hard_triplet(TripletBatch::make(x, labels, 2.0), red).loss; };
    const Matrix analytic = batch_hard_triplet(TripletBatch::make(x, labels, 2.0), red).grad;
    CHECK(relative_max_error(analytic, finite_difference(x, 1e-6, loss)) <= 1e-7);
  }
}
