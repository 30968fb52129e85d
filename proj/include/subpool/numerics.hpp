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

namespace subpool {

/// Dense row-major matrix of doubles.
///
/// All arithmetic in the library runs in double precision; single precision
/// only shows up when tensors are written to or read from disk.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`, which must hold rows*cols values.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  /// Builds an rows x cols matrix whose column j is `columns[j]`.
  static Matrix from_columns(std::size_t rows, const std::vector<std::vector<double>>& columns);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> col(std::size_t c) const;

  Matrix transposed() const;
  /// The first `count` columns.
  Matrix leading_cols(std::size_t count) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// Thin singular value decomposition A = U diag(S) V^T with r = min(m, n).
struct SvdFactors {
  Matrix U;               // m x r, orthonormal columns
  std::vector<double> S;  // r values, non-negative, descending
  Matrix V;               // n x r, orthonormal columns
};

bool all_finite(const Matrix& a);
bool all_finite(std::span<const double> v);

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Sweeps over all column pairs until every pair is orthogonal to 1e-12
/// relative, capped at 60 sweeps. Singular values come out sorted
/// descending; equal values keep their pre-sort order, so the result is a
/// deterministic function of the input bits. Columns of U belonging to
/// (numerically) zero singular values are completed to an orthonormal set.
///
/// Throws NumericError on non-finite input or when the sweep cap is hit.
SvdFactors svd(const Matrix& a);

inline constexpr int kSvdMaxSweeps = 60;
inline constexpr double kSvdTolerance = 1e-12;

}  // namespace subpool
