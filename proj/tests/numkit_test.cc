// tests/numkit_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gembed/error.h"
#include "gembed/matrix.h"
#include "gembed/reference.h"
#include "gembed/rng.h"

using namespace gembed;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng* rng,
                         double scale = 1.0) {
  RealMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng->normal() * scale;
  return m;
}

double max_abs_diff(const RealMatrix& a, const RealMatrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul identity leaves the operand unchanged") {
  Rng rng(7);
  RealMatrix m = random_matrix(3, 3, &rng);
  RealMatrix out = numkit::matmul(RealMatrix::identity(3), m);
  CHECK(max_abs_diff(out, m) == 0.0);
}

TEST_CASE("matmul hand-checkable 2x2 case") {
  RealMatrix a(2, 2);
  a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
  RealMatrix b(2, 1);
  b(0, 0) = 0; b(1, 0) = 1;
  RealMatrix c = numkit::matmul(a, b);
  CHECK(c(0, 0) == 2.0);
  CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul matches the naive triple-loop reference") {
  Rng rng(11);
  RealMatrix a = random_matrix(5, 7, &rng);
  RealMatrix b = random_matrix(7, 3, &rng);
  RealMatrix fast = numkit::matmul(a, b);
  RealMatrix slow = reference::matmul(a, b);
  CHECK(max_abs_diff(fast, slow) < 1e-12);
}

TEST_CASE("matmul rejects dimension mismatches") {
  RealMatrix a(2, 3), b(4, 2);
  CHECK_THROWS_AS(numkit::matmul(a, b), InputError);
  CHECK_THROWS_AS(numkit::matvec(a, RealVector(2)), InputError);
  CHECK_THROWS_AS(numkit::dot(RealVector(2), RealVector(3)), InputError);
}

TEST_CASE("softmax of a constant row is uniform") {
  RealMatrix logits(1, 3);
  RealMatrix probs = numkit::softmax_rows(logits);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(probs(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("softmax max-shift avoids overflow") {
  RealMatrix logits(1, 2);
  logits(0, 0) = 1000.0;
  logits(0, 1) = 0.0;
  RealMatrix probs = numkit::softmax_rows(logits);
  CHECK(std::isfinite(probs(0, 0)));
  CHECK(probs(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(probs(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax matches direct evaluation on [1,2,3]") {
  RealMatrix logits(1, 3);
  logits(0, 0) = 1; logits(0, 1) = 2; logits(0, 2) = 3;
  RealMatrix probs = numkit::softmax_rows(logits);
  CHECK(probs(0, 0) == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(probs(0, 1) == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(probs(0, 2) == doctest::Approx(0.66524096).epsilon(1e-7));
}

TEST_CASE("softmax rows sum to one for entries of magnitude up to 1e3") {
  Rng rng(3);
  RealMatrix logits = random_matrix(20, 8, &rng, 1e3);
  RealMatrix probs = numkit::softmax_rows(logits);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      CHECK(probs(i, j) >= 0.0);
      CHECK(probs(i, j) <= 1.0);
      sum += probs(i, j);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax entries stay strictly inside (0,1) for moderate logits") {
  Rng rng(4);
  RealMatrix logits = random_matrix(20, 8, &rng, 10.0);
  RealMatrix probs = numkit::softmax_rows(logits);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    CHECK(probs.data()[i] > 0.0);
    CHECK(probs.data()[i] < 1.0);
  }
}

TEST_CASE("cholesky of identity is identity") {
  RealMatrix l = numkit::cholesky(RealMatrix::identity(4));
  CHECK(max_abs_diff(l, RealMatrix::identity(4)) == 0.0);
}

TEST_CASE("cholesky closed-form 2x2") {
  RealMatrix a(2, 2);
  a(0, 0) = 4; a(0, 1) = 2; a(1, 0) = 2; a(1, 1) = 3;
  RealMatrix l = numkit::cholesky(a);
  CHECK(l(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(l(0, 1) == 0.0);
  CHECK(l(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("cholesky reconstructs A^T A + I within 1e-10 relative") {
  Rng rng(13);
  RealMatrix a = random_matrix(6, 6, &rng);
  RealMatrix spd = numkit::matmul(numkit::transpose(a), a);
  for (std::size_t i = 0; i < 6; ++i) spd(i, i) += 1.0;
  RealMatrix l = numkit::cholesky(spd);
  RealMatrix rebuilt = numkit::matmul(l, numkit::transpose(l));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < spd.size(); ++i) {
    const double d = rebuilt.data()[i] - spd.data()[i];
    num += d * d;
    den += spd.data()[i] * spd.data()[i];
  }
  CHECK(std::sqrt(num / den) < 1e-10);
}

TEST_CASE("cholesky reports the failing pivot on non-SPD input") {
  RealMatrix a = RealMatrix::identity(3);
  a(1, 1) = -1.0;
  try {
    numkit::cholesky(a);
    FAIL("expected DecompositionError");
  } catch (const DecompositionError& e) {
    CHECK(e.pivot_index() == 1);
  }
}

TEST_CASE("triangular solves invert cholesky factors") {
  Rng rng(17);
  RealMatrix a = random_matrix(5, 5, &rng);
  RealMatrix spd = numkit::matmul(numkit::transpose(a), a);
  for (std::size_t i = 0; i < 5; ++i) spd(i, i) += 2.0;
  RealMatrix l = numkit::cholesky(spd);
  RealMatrix inv = numkit::solve_lower(l, RealMatrix::identity(5));
  CHECK(max_abs_diff(numkit::matmul(l, inv), RealMatrix::identity(5)) < 1e-12);
  RealMatrix inv_t = numkit::solve_lower_transposed(l, RealMatrix::identity(5));
  CHECK(max_abs_diff(numkit::matmul(numkit::transpose(l), inv_t),
                     RealMatrix::identity(5)) < 1e-12);
}

TEST_CASE("sym_eig of a diagonal matrix sorts eigenvalues descending") {
  RealMatrix d(3, 3);
  d(0, 0) = 3; d(1, 1) = 1; d(2, 2) = 2;
  numkit::SymEig eig = numkit::sym_eig(d);
  CHECK(eig.eigenvalues[0] == doctest::Approx(3.0));
  CHECK(eig.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(eig.eigenvalues[2] == doctest::Approx(1.0));
}

TEST_CASE("sym_eig of identity gives all ones") {
  numkit::SymEig eig = numkit::sym_eig(RealMatrix::identity(5));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(eig.eigenvalues[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sym_eig residuals and orthonormality on random symmetric matrices") {
  Rng rng(19);
  for (int trial = 0; trial < 4; ++trial) {
    RealMatrix a = random_matrix(6, 6, &rng);
    RealMatrix sym(6, 6);
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) sym(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
    numkit::SymEig eig = numkit::sym_eig(sym);
    // ||A v - lambda v|| < 1e-8 for every pair.
    for (std::size_t k = 0; k < 6; ++k) {
      RealVector v(6);
      for (std::size_t i = 0; i < 6; ++i) v[i] = eig.eigenvectors(i, k);
      RealVector av = numkit::matvec(sym, v);
      double residual = 0.0;
      for (std::size_t i = 0; i < 6; ++i) {
        const double r = av[i] - eig.eigenvalues[k] * v[i];
        residual += r * r;
      }
      CHECK(std::sqrt(residual) < 1e-8);
    }
    // ||V^T V - I||_inf < 1e-8.
    RealMatrix vtv = numkit::matmul(numkit::transpose(eig.eigenvectors),
                                    eig.eigenvectors);
    CHECK(max_abs_diff(vtv, RealMatrix::identity(6)) < 1e-8);
  }
}

TEST_CASE("sym_eig rejects non-square and asymmetric inputs") {
  CHECK_THROWS_AS(numkit::sym_eig(RealMatrix(2, 3)), InputError);
  RealMatrix a(2, 2);
  a(0, 1) = 1.0;
  a(1, 0) = 2.0;
  CHECK_THROWS_AS(numkit::sym_eig(a), InputError);
}

TEST_CASE("rowwise_mean_std on a single frame degenerates to sqrt(eps)") {
  RealMatrix frames(1, 3);
  frames(0, 0) = 1.0; frames(0, 1) = -2.0; frames(0, 2) = 0.5;
  numkit::MeanStd out = numkit::rowwise_mean_std(frames, 1e-10);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(out.mean[j] == frames(0, j));
    CHECK(out.std[j] == doctest::Approx(std::sqrt(1e-10)).epsilon(1e-12));
    CHECK(out.std[j] > 0.0);
  }
}

TEST_CASE("rowwise_mean_std two-frame hand case") {
  RealMatrix frames(2, 1);
  frames(0, 0) = 0.0;
  frames(1, 0) = 2.0;
  numkit::MeanStd out = numkit::rowwise_mean_std(frames, 0.0);
  CHECK(out.mean[0] == 1.0);
  CHECK(out.std[0] == 1.0);
}

TEST_CASE("rowwise_mean_std matches the two-pass reference") {
  Rng rng(23);
  RealMatrix frames = random_matrix(100, 4, &rng, 3.0);
  numkit::MeanStd fast = numkit::rowwise_mean_std(frames, 1e-10);
  numkit::MeanStd slow = reference::rowwise_mean_std(frames, 1e-10);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::abs(fast.mean[j] - slow.mean[j]) < 1e-10);
    CHECK(std::abs(fast.std[j] - slow.std[j]) < 1e-10);
  }
}

TEST_CASE("rowwise_mean_std rejects zero rows") {
  CHECK_THROWS_AS(numkit::rowwise_mean_std(RealMatrix(0, 3), 1e-10), InputError);
}

TEST_CASE("rng determinism and stream independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::derive_seed(1, 0) != Rng::derive_seed(1, 1));
  CHECK(Rng::derive_seed(1, 0) != Rng::derive_seed(2, 0));
}

TEST_CASE("rng state round trips") {
  Rng a(5);
  for (int i = 0; i < 17; ++i) a.normal();
  std::string state = a.save_state();
  Rng b(0);
  b.load_state(state);
  for (int i = 0; i < 50; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng uniform_index stays in range and covers values") {
  Rng rng(9);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 1000; ++i) ++seen[rng.uniform_index(5)];
  for (int count : seen) CHECK(count > 100);
}
