// src/matrix.cc

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

#include "gembed/matrix.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gembed/error.h"
#include "gembed/threads.h"

namespace gembed {
namespace numkit {

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
  if (a.cols() != b.rows()) {
    throw InputError(msg("matmul: dimension mismatch, (", a.rows(), "x",
                         a.cols(), ") * (", b.rows(), "x", b.cols(), ")"));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  RealMatrix c(m, n);
  const long long mll = static_cast<long long>(m);
#pragma omp parallel for num_threads(worker_count()) if (m * k * n > 16384)
  for (long long i = 0; i < mll; ++i) {
    double* crow = c.row(static_cast<std::size_t>(i));
    const double* arow = a.row(static_cast<std::size_t>(i));
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

RealVector matvec(const RealMatrix& a, const RealVector& x) {
  if (a.cols() != x.dim()) {
    throw InputError(msg("matvec: dimension mismatch, (", a.rows(), "x",
                         a.cols(), ") * (", x.dim(), ")"));
  }
  RealVector y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += arow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

RealMatrix transpose(const RealMatrix& a) {
  RealMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double dot(const RealVector& a, const RealVector& b) {
  if (a.dim() != b.dim()) {
    throw InputError(msg("dot: dimension mismatch, ", a.dim(), " vs ", b.dim()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const RealVector& a) { return std::sqrt(dot(a, a)); }

RealMatrix softmax_rows(const RealMatrix& logits) {
  RealMatrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double* in = logits.row(i);
    double* o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < logits.cols(); ++j) o[j] /= sum;
  }
  return out;
}

RealMatrix cholesky(const RealMatrix& spd) {
  if (spd.rows() != spd.cols()) {
    throw InputError(msg("cholesky: matrix not square, ", spd.rows(), "x", spd.cols()));
  }
  const std::size_t n = spd.rows();
  RealMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = spd(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw DecompositionError("cholesky: input is not positive definite", j);
    }
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

RealMatrix solve_lower(const RealMatrix& lower, const RealMatrix& b) {
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw InputError("solve_lower: dimension mismatch");
  }
  const std::size_t n = lower.rows(), m = b.cols();
  RealMatrix x(n, m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * x(k, c);
      x(i, c) = s / lower(i, i);
    }
  }
  return x;
}

RealMatrix solve_lower_transposed(const RealMatrix& lower, const RealMatrix& b) {
  if (lower.rows() != lower.cols() || lower.rows() != b.rows()) {
    throw InputError("solve_lower_transposed: dimension mismatch");
  }
  const std::size_t n = lower.rows(), m = b.cols();
  RealMatrix x(n, m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t ii = n; ii-- > 0;) {
      double s = b(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * x(k, c);
      x(ii, c) = s / lower(ii, ii);
    }
  }
  return x;
}

namespace {

// Off-diagonal Frobenius norm squared.
double offdiag_sq(const RealMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return s;
}

}  // namespace

SymEig sym_eig(const RealMatrix& sym) {
  if (sym.rows() != sym.cols()) {
    throw InputError(msg("sym_eig: matrix not square, ", sym.rows(), "x", sym.cols()));
  }
  const std::size_t n = sym.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(sym(i, j)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(sym(i, j) - sym(j, i)) > 1e-8 * std::max(1.0, scale)) {
        throw InputError(msg("sym_eig: input not symmetric at (", i, ",", j, ")"));
      }
    }
  }

  RealMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (sym(i, j) + sym(j, i));
  RealMatrix v = RealMatrix::identity(n);

  const double tol = 1e-24 * std::max(1.0, scale) * std::max(1.0, scale) * n * n;
  constexpr int kMaxSweeps = 100;
  bool converged = n < 2;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (apq == 0.0) continue;
        double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        // A <- J^T A J with the (p,q) Givens rotation J.
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = offdiag_sq(a) <= tol;
  }
  if (!converged) {
    throw NumericalError("sym_eig: Jacobi iteration did not converge in 100 sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  SymEig result;
  result.eigenvalues = RealVector(n);
  result.eigenvectors = RealMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    result.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, j) = v(i, order[j]);
  }
  return result;
}

MeanStd rowwise_mean_std(const RealMatrix& frames, double epsilon) {
  if (frames.rows() == 0) {
    throw InputError("rowwise_mean_std: zero rows");
  }
  if (epsilon < 0.0) {
    throw InputError("rowwise_mean_std: epsilon must be non-negative");
  }
  const std::size_t t = frames.rows(), d = frames.cols();
  MeanStd out;
  out.mean = RealVector(d);
  out.std = RealVector(d);
  for (std::size_t i = 0; i < t; ++i) {
    const double* r = frames.row(i);
    for (std::size_t j = 0; j < d; ++j) out.mean[j] += r[j];
  }
  for (std::size_t j = 0; j < d; ++j) out.mean[j] /= static_cast<double>(t);
  for (std::size_t i = 0; i < t; ++i) {
    const double* r = frames.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      double diff = r[j] - out.mean[j];
      out.std[j] += diff * diff;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    out.std[j] = std::sqrt(out.std[j] / static_cast<double>(t) + epsilon);
  }
  return out;
}

bool all_finite(const RealMatrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

bool all_finite(const RealVector& v) {
  for (std::size_t i = 0; i < v.dim(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

}  // namespace numkit
}  // namespace gembed
