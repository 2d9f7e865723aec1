// gembed/backend.h

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

#ifndef GEMBED_BACKEND_H_
#define GEMBED_BACKEND_H_

#include <cstddef>
#include <string>
#include <vector>

#include "gembed/corpus_io.h"
#include "gembed/matrix.h"
#include "gembed/metrics.h"

namespace gembed {
namespace backend {

/// Fisher discriminant projection: columns ordered by descending
/// discriminability. The construction whitens with the within-class scatter
/// (Cholesky) and eigendecomposes the transformed between-class scatter, so
/// projected training data has identity within-class scatter.
struct LdaModel {
  RealMatrix projection;  // embed_dim x out_dim
  RealVector mean;        // training global mean
};

/// Projects a centered vector: y = P^T (x - mean).
RealVector lda_apply(const LdaModel& model, const RealVector& x);
RealMatrix lda_apply_rows(const LdaModel& model, const RealMatrix& rows);

/// out_dim must not exceed min(dim, num_classes - 1). A singular within-class
/// scatter is floored (1e-6 * trace/dim on the diagonal) with a warning.
LdaModel fit_lda(const RealMatrix& embeddings,
                 const std::vector<std::size_t>& labels, std::size_t out_dim);

/// Two-covariance PLDA: x = mu + y + e with y ~ N(0, between) speaker
/// variability and e ~ N(0, within) channel variability. The transform
/// simultaneously diagonalizes both covariances (T within T^T = I,
/// T between T^T = diag(psi)) so trial scoring is a per-dimension
/// computation in the transformed space.
struct PldaModel {
  RealVector mu;
  RealMatrix between_cov;
  RealMatrix within_cov;
  RealMatrix transform;  // dim x dim
  RealVector psi;        // diagonal of the transformed between covariance

  std::size_t dim() const { return mu.dim(); }

  /// Builds the scoring transform from given covariances, flooring within_cov
  /// when necessary. Moment estimation is bypassed.
  static PldaModel from_covariances(RealVector mu, RealMatrix between,
                                    RealMatrix within);
};

/// Moment-based estimation: within_cov pools per-speaker residuals
/// (denominator N - C), between_cov is the covariance of speaker means minus
/// the expected within-class noise within_cov * mean_s(1/n_s), with negative
/// eigenvalues floored to zero. Needs at least two speakers with two
/// utterances each.
PldaModel fit_plda(const RealMatrix& embeddings,
                   const std::vector<std::size_t>& labels);

/// Log-likelihood ratio
/// log p(enroll, test | same speaker) - log p(enroll, test | different),
/// single-enrollment scoring in the diagonalized space.
double plda_score(const PldaModel& model, const RealVector& enroll,
                  const RealVector& test);

/// dot(e, t) / (||e|| * ||t||); rejects zero vectors.
double cosine_score(const RealVector& enroll, const RealVector& test);

enum class ScoringKind { kPlda, kCosine };

/// A fitted scoring backend: optional LDA projection, optional length
/// normalization (unit sphere rescaled by sqrt(dim)), then PLDA or cosine.
struct BackendModel {
  ScoringKind kind = ScoringKind::kPlda;
  bool has_lda = false;
  LdaModel lda;
  bool length_norm = false;
  PldaModel plda;  // unused for cosine
};

struct BackendOptions {
  ScoringKind kind = ScoringKind::kPlda;
  /// Requested LDA dimension; 0 disables the projection. Clamped to
  /// num_classes - 1 by the CLI, enforced here.
  std::size_t lda_dim = 150;
  bool length_norm = false;
};

BackendModel fit_backend(const RealMatrix& embeddings,
                         const std::vector<std::size_t>& labels,
                         const BackendOptions& options);

/// One score per trial, order preserving. Applies the model's LDA projection
/// and length normalization before scoring. Unresolvable utterance ids raise
/// InputError naming the id. Parallel across trials.
eval::ScoreSet score_trials(const BackendModel& model,
                            const corpus::EmbeddingArchive& embeddings,
                            const std::vector<eval::Trial>& trials);

void save_backend(const std::string& path, const BackendModel& model);
BackendModel load_backend(const std::string& path);

}  // namespace backend
}  // namespace gembed

#endif  // GEMBED_BACKEND_H_
