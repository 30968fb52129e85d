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

#include "subpool/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "subpool/error.hpp"

namespace subpool {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidArgument("Matrix: " + std::to_string(data_.size()) + " values for a " +
                          std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::from_columns(std::size_t rows, const std::vector<std::vector<double>>& columns) {
  Matrix m(rows, columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (columns[j].size() != rows) throw InvalidArgument("Matrix::from_columns: ragged columns");
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = columns[j][i];
  }
  return m;
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, c);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::leading_cols(std::size_t count) const {
  if (count > cols_) throw InvalidArgument("Matrix::leading_cols: count exceeds column count");
  Matrix m(rows_, count);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < count; ++j) m(i, j) = (*this)(i, j);
  return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw InvalidArgument("Matrix +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw InvalidArgument("Matrix -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool all_finite(const Matrix& a) { return all_finite(a.data()); }

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw InvalidArgument("matmul: " + shape(a) + " * " + shape(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aip * brow[j];
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw InvalidArgument("matmul_tn: " + shape(a) + "^T * " + shape(b));
  Matrix c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    auto arow = a.row(p);
    auto brow = b.row(p);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += api * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw InvalidArgument("matmul_nt: " + shape(a) + " * " + shape(b) + "^T");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(a.row(i), b.row(j));
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

namespace {

using Columns = std::vector<std::vector<double>>;

// Orthogonalizes the columns of `w` in place and accumulates the rotations
// into `v`. Returns the number of sweeps used.
int jacobi_sweeps(Columns& w, Columns& v) {
  const std::size_t n = w.size();
  const std::size_t m = n ? w[0].size() : 0;
  for (int sweep = 1; sweep <= kSvdMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto& wp = w[p];
        auto& wq = w[q];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += wp[i] * wp[i];
          beta += wq[i] * wq[i];
          gamma += wp[i] * wq[i];
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= kSvdTolerance * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double a = wp[i];
          const double b = wq[i];
          wp[i] = c * a - s * b;
          wq[i] = s * a + c * b;
        }
        auto& vp = v[p];
        auto& vq = v[q];
        for (std::size_t i = 0; i < vp.size(); ++i) {
          const double a = vp[i];
          const double b = vq[i];
          vp[i] = c * a - s * b;
          vq[i] = s * a + c * b;
        }
      }
    }
    if (!rotated) return sweep;
  }
  throw NumericError("svd: one-sided Jacobi did not converge within " + std::to_string(kSvdMaxSweeps) +
                     " sweeps");
}

// Fills the columns flagged in `missing` with unit vectors orthogonal to all
// other columns (Gram-Schmidt over the standard basis, twice for stability).
void complete_basis(Columns& u, const std::vector<bool>& missing) {
  const std::size_t m = u.empty() ? 0 : u[0].size();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    if (!missing[j]) continue;
    for (; candidate < m; ++candidate) {
      std::vector<double> e(m, 0.0);
      e[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.size(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          const double proj = dot(e, u[k]);
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u[k][i];
        }
      }
      const double norm = std::sqrt(dot(e, e));
      if (norm > 0.5) {
        for (double& x : e) x /= norm;
        u[j] = std::move(e);
        ++candidate;
        break;
      }
    }
  }
}

}  // namespace

SvdFactors svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) throw InvalidArgument("svd: empty matrix");
  if (!all_finite(a)) throw NumericError("svd: input contains NaN or Inf");

  // Work on the orientation with fewer columns so that r = min(m, n) columns
  // get orthogonalized; for wide inputs decompose A^T and swap the factors.
  const bool wide = a.rows() < a.cols();
  const Matrix& src = a;
  const std::size_t len = wide ? a.cols() : a.rows();  // column length
  const std::size_t r = wide ? a.rows() : a.cols();    // number of columns

  Columns w(r, std::vector<double>(len));
  for (std::size_t j = 0; j < r; ++j)
    for (std::size_t i = 0; i < len; ++i) w[j][i] = wide ? src(j, i) : src(i, j);
  Columns v(r, std::vector<double>(r, 0.0));
  for (std::size_t j = 0; j < r; ++j) v[j][j] = 1.0;

  jacobi_sweeps(w, v);

  std::vector<double> sigma(r);
  for (std::size_t j = 0; j < r; ++j) sigma[j] = std::sqrt(dot(w[j], w[j]));

  std::vector<std::size_t> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = r ? sigma[order[0]] : 0.0;
  const double null_threshold =
      static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon() * smax;

  Columns left(r), right(r);
  std::vector<double> s(r);
  std::vector<bool> missing(r, false);
  for (std::size_t j = 0; j < r; ++j) {
    const std::size_t src_col = order[j];
    s[j] = sigma[src_col];
    right[j] = v[src_col];
    left[j] = w[src_col];
    if (s[j] > null_threshold && s[j] > 0.0) {
      for (double& x : left[j]) x /= s[j];
    } else {
      missing[j] = true;
    }
  }
  complete_basis(left, missing);

  // `left` spans the orthogonalized side (length len), `right` the rotation side.
  const Matrix lm = Matrix::from_columns(len, left);
  const Matrix rm = Matrix::from_columns(r, right);
  SvdFactors out;
  out.S = std::move(s);
  if (wide) {
    out.U = rm;
    out.V = lm;
  } else {
    out.U = lm;
    out.V = rm;
  }
  return out;
}

}  // namespace subpool
