// gembed/matrix.h

// Copyright 2026  The gembed authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef GEMBED_MATRIX_H_
#define GEMBED_MATRIX_H_

#include <cassert>
#include <cstddef>
#include <vector>

namespace gembed {

/// Dense real vector, 64-bit entries throughout.
class RealVector {
 public:
  RealVector() = default;
  explicit RealVector(std::size_t dim, double value = 0.0) : data_(dim, value) {}

  std::size_t dim() const { return data_.size(); }

  double& operator[](std::size_t i) {
    assert(i < data_.size());
    return data_[i];
  }
  double operator[](std::size_t i) const {
    assert(i < data_.size());
    return data_[i];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::vector<double>::iterator begin() { return data_.begin(); }
  std::vector<double>::iterator end() { return data_.end(); }
  std::vector<double>::const_iterator begin() const { return data_.begin(); }
  std::vector<double>::const_iterator end() const { return data_.end(); }

  bool operator==(const RealVector&) const = default;

 private:
  std::vector<double> data_;
};

/// Dense real matrix, row-major.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  static RealMatrix identity(std::size_t n) {
    RealMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  double* row(std::size_t r) {
    assert(r < rows_);
    return data_.data() + r * cols_;
  }
  const double* row(std::size_t r) const {
    assert(r < rows_);
    return data_.data() + r * cols_;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  RealVector row_copy(std::size_t r) const {
    RealVector v(cols_);
    const double* src = row(r);
    for (std::size_t c = 0; c < cols_; ++c) v[c] = src[c];
    return v;
  }

  void set_row(std::size_t r, const RealVector& v) {
    assert(v.dim() == cols_);
    double* dst = row(r);
    for (std::size_t c = 0; c < cols_; ++c) dst[c] = v[c];
  }

  bool operator==(const RealMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace numkit {

/// Matrix product a*b; a.cols must equal b.rows. Parallel over output rows;
/// each entry is accumulated serially over k, so results do not depend on the
/// worker count.
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);

RealVector matvec(const RealMatrix& a, const RealVector& x);

RealMatrix transpose(const RealMatrix& a);

double dot(const RealVector& a, const RealVector& b);

double norm(const RealVector& a);

/// Row-wise softmax with max-shift: stable for entries of any magnitude.
/// Every output row sums to 1 to within a few ulp.
RealMatrix softmax_rows(const RealMatrix& logits);

/// Lower-triangular Cholesky factor L with L*L^T = spd. The strict upper
/// triangle of the input is ignored (assumed symmetric). Throws
/// DecompositionError carrying the failing pivot index when the input is not
/// positive definite.
RealMatrix cholesky(const RealMatrix& spd);

/// Solves L x = b for lower-triangular L, column by column.
RealMatrix solve_lower(const RealMatrix& lower, const RealMatrix& b);

/// Solves L^T x = b for lower-triangular L.
RealMatrix solve_lower_transposed(const RealMatrix& lower, const RealMatrix& b);

struct SymEig {
  RealVector eigenvalues;   // descending
  RealMatrix eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations, capped at 100
/// sweeps. Adequate at the dimensions this toolkit uses (<= 512). Input must
/// be square and symmetric to 1e-8 relative; it is symmetrized internally.
SymEig sym_eig(const RealMatrix& sym);

struct MeanStd {
  RealVector mean;
  RealVector std;
};

/// Per-column mean and standard deviation over the rows of `frames`.
/// Variance is the population form (divide by the row count) and the standard
/// deviation is sqrt(variance + epsilon), so it stays positive on constant
/// input whenever epsilon > 0.
MeanStd rowwise_mean_std(const RealMatrix& frames, double epsilon);

bool all_finite(const RealMatrix& m);
bool all_finite(const RealVector& v);

}  // namespace numkit
}  // namespace gembed

#endif  // GEMBED_MATRIX_H_
