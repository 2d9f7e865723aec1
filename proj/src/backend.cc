// src/backend.cc

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

#include "gembed/backend.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include "gembed/error.h"
#include "gembed/threads.h"

namespace gembed {
namespace backend {

namespace {

struct ClassStats {
  std::vector<std::size_t> counts;
  RealMatrix class_means;  // num_classes x dim
  RealVector global_mean;  // dim
  std::size_t num_classes = 0;
  std::size_t num_samples = 0;
};

ClassStats class_stats(const RealMatrix& embeddings,
                       const std::vector<std::size_t>& labels,
                       const char* where) {
  if (embeddings.rows() == 0) throw InputError(msg(where, ": no embeddings"));
  if (labels.size() != embeddings.rows()) {
    throw InputError(msg(where, ": ", embeddings.rows(), " rows but ",
                         labels.size(), " labels"));
  }
  ClassStats stats;
  stats.num_samples = embeddings.rows();
  stats.num_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  stats.counts.assign(stats.num_classes, 0);
  stats.class_means = RealMatrix(stats.num_classes, embeddings.cols());
  stats.global_mean = RealVector(embeddings.cols());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    ++stats.counts[labels[i]];
    const double* row = embeddings.row(i);
    double* acc = stats.class_means.row(labels[i]);
    for (std::size_t d = 0; d < embeddings.cols(); ++d) {
      acc[d] += row[d];
      stats.global_mean[d] += row[d];
    }
  }
  for (std::size_t c = 0; c < stats.num_classes; ++c) {
    if (stats.counts[c] == 0) {
      throw InputError(msg(where, ": class ", c, " has no samples"));
    }
    double* acc = stats.class_means.row(c);
    for (std::size_t d = 0; d < embeddings.cols(); ++d) {
      acc[d] /= static_cast<double>(stats.counts[c]);
    }
  }
  for (std::size_t d = 0; d < embeddings.cols(); ++d) {
    stats.global_mean[d] /= static_cast<double>(stats.num_samples);
  }
  return stats;
}

void add_floor(RealMatrix* m) {
  double trace = 0.0;
  for (std::size_t i = 0; i < m->rows(); ++i) trace += (*m)(i, i);
  const double floor = 1e-6 * trace / static_cast<double>(m->rows());
  for (std::size_t i = 0; i < m->rows(); ++i) {
    (*m)(i, i) += floor > 0.0 ? floor : 1e-10;
  }
}

RealMatrix cholesky_with_floor(const RealMatrix& m, const char* where) {
  try {
    return numkit::cholesky(m);
  } catch (const DecompositionError&) {
    std::cerr << where << ": scatter is singular, flooring the diagonal\n";
  }
  RealMatrix floored = m;
  add_floor(&floored);
  try {
    return numkit::cholesky(floored);
  } catch (const DecompositionError& e) {
    throw NumericalError(msg(where, ": scatter not positive definite even "
                             "after flooring: ", e.what()));
  }
}

// L^-1 S L^-T for lower-triangular L, symmetrized.
RealMatrix whiten_symmetric(const RealMatrix& lower, const RealMatrix& sym) {
  RealMatrix half = numkit::solve_lower(lower, sym);           // L^-1 S
  RealMatrix full = numkit::solve_lower(lower, numkit::transpose(half));
  RealMatrix result = numkit::transpose(full);                 // L^-1 S L^-T
  for (std::size_t i = 0; i < result.rows(); ++i) {
    for (std::size_t j = i + 1; j < result.cols(); ++j) {
      const double v = 0.5 * (result(i, j) + result(j, i));
      result(i, j) = v;
      result(j, i) = v;
    }
  }
  return result;
}

}  // namespace

RealVector lda_apply(const LdaModel& model, const RealVector& x) {
  if (x.dim() != model.projection.rows()) {
    throw InputError(msg("lda_apply: vector dim ", x.dim(), " vs projection ",
                         model.projection.rows()));
  }
  RealVector y(model.projection.cols());
  for (std::size_t j = 0; j < model.projection.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t d = 0; d < model.projection.rows(); ++d) {
      acc += model.projection(d, j) * (x[d] - model.mean[d]);
    }
    y[j] = acc;
  }
  return y;
}

RealMatrix lda_apply_rows(const LdaModel& model, const RealMatrix& rows) {
  RealMatrix out(rows.rows(), model.projection.cols());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    RealVector y = lda_apply(model, rows.row_copy(i));
    out.set_row(i, y);
  }
  return out;
}

LdaModel fit_lda(const RealMatrix& embeddings,
                 const std::vector<std::size_t>& labels, std::size_t out_dim) {
  ClassStats stats = class_stats(embeddings, labels, "fit_lda");
  if (stats.num_classes < 2) {
    throw InputError("fit_lda: need at least 2 classes");
  }
  for (std::size_t c = 0; c < stats.num_classes; ++c) {
    if (stats.counts[c] < 2) {
      throw InputError(msg("fit_lda: class ", c, " has fewer than 2 samples"));
    }
  }
  const std::size_t dim = embeddings.cols();
  const std::size_t bound = std::min(dim, stats.num_classes - 1);
  if (out_dim == 0 || out_dim > bound) {
    throw InputError(msg("fit_lda: out_dim ", out_dim,
                         " outside [1, min(dim, classes-1)] = [1, ", bound, "]"));
  }

  // Within- and between-class scatter, both normalized by N.
  RealMatrix sw(dim, dim), sb(dim, dim);
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    const double* x = embeddings.row(i);
    const double* m = stats.class_means.row(labels[i]);
    for (std::size_t a = 0; a < dim; ++a) {
      const double ra = x[a] - m[a];
      for (std::size_t b = a; b < dim; ++b) sw(a, b) += ra * (x[b] - m[b]);
    }
  }
  for (std::size_t c = 0; c < stats.num_classes; ++c) {
    const double* m = stats.class_means.row(c);
    const double weight = static_cast<double>(stats.counts[c]);
    for (std::size_t a = 0; a < dim; ++a) {
      const double da = m[a] - stats.global_mean[a];
      for (std::size_t b = a; b < dim; ++b) {
        sb(a, b) += weight * da * (m[b] - stats.global_mean[b]);
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(stats.num_samples);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      sw(a, b) *= inv_n;
      sw(b, a) = sw(a, b);
      sb(a, b) *= inv_n;
      sb(b, a) = sb(a, b);
    }
  }

  RealMatrix lower = cholesky_with_floor(sw, "fit_lda");
  RealMatrix whitened_sb = whiten_symmetric(lower, sb);
  numkit::SymEig eig = numkit::sym_eig(whitened_sb);

  // projection = L^-T U_k, so P^T Sw P = I and P^T Sb P = diag(top
  // eigenvalues).
  RealMatrix top(dim, out_dim);
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t j = 0; j < out_dim; ++j) top(d, j) = eig.eigenvectors(d, j);
  }
  LdaModel model;
  model.projection = numkit::solve_lower_transposed(lower, top);
  model.mean = stats.global_mean;
  return model;
}

PldaModel PldaModel::from_covariances(RealVector mu, RealMatrix between,
                                      RealMatrix within) {
  if (between.rows() != mu.dim() || between.cols() != mu.dim() ||
      within.rows() != mu.dim() || within.cols() != mu.dim()) {
    throw InputError("plda: covariance shapes do not match the mean");
  }
  PldaModel model;
  model.mu = std::move(mu);
  model.between_cov = std::move(between);
  model.within_cov = std::move(within);

  RealMatrix lower = cholesky_with_floor(model.within_cov, "plda");
  RealMatrix whitened_between = whiten_symmetric(lower, model.between_cov);
  numkit::SymEig eig = numkit::sym_eig(whitened_between);
  model.psi = eig.eigenvalues;
  for (std::size_t i = 0; i < model.psi.dim(); ++i) {
    if (model.psi[i] < 0.0) model.psi[i] = 0.0;
  }
  // T = U^T L^-1: T within T^T = I and T between T^T = diag(psi).
  RealMatrix lower_inv =
      numkit::solve_lower(lower, RealMatrix::identity(model.mu.dim()));
  model.transform = numkit::matmul(numkit::transpose(eig.eigenvectors), lower_inv);
  return model;
}

PldaModel fit_plda(const RealMatrix& embeddings,
                   const std::vector<std::size_t>& labels) {
  ClassStats stats = class_stats(embeddings, labels, "fit_plda");
  std::size_t multi = 0;
  for (std::size_t c = 0; c < stats.num_classes; ++c) {
    if (stats.counts[c] >= 2) ++multi;
  }
  if (stats.num_classes < 2 || multi < 2) {
    throw InputError("fit_plda: need at least 2 speakers with 2 utterances each");
  }
  const std::size_t dim = embeddings.cols();
  const std::size_t n = stats.num_samples, c_total = stats.num_classes;

  // Pooled within-speaker covariance, denominator N - C.
  RealMatrix within(dim, dim);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = embeddings.row(i);
    const double* m = stats.class_means.row(labels[i]);
    for (std::size_t a = 0; a < dim; ++a) {
      const double ra = x[a] - m[a];
      for (std::size_t b = a; b < dim; ++b) within(a, b) += ra * (x[b] - m[b]);
    }
  }
  const double within_denom = static_cast<double>(n - c_total);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      within(a, b) /= within_denom;
      within(b, a) = within(a, b);
    }
  }

  // Unweighted covariance of speaker means around their own mean.
  RealVector mean_of_means(dim);
  for (std::size_t c = 0; c < c_total; ++c) {
    const double* m = stats.class_means.row(c);
    for (std::size_t d = 0; d < dim; ++d) mean_of_means[d] += m[d];
  }
  for (std::size_t d = 0; d < dim; ++d) {
    mean_of_means[d] /= static_cast<double>(c_total);
  }
  RealMatrix means_cov(dim, dim);
  for (std::size_t c = 0; c < c_total; ++c) {
    const double* m = stats.class_means.row(c);
    for (std::size_t a = 0; a < dim; ++a) {
      const double da = m[a] - mean_of_means[a];
      for (std::size_t b = a; b < dim; ++b) {
        means_cov(a, b) += da * (m[b] - mean_of_means[b]);
      }
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      means_cov(a, b) /= static_cast<double>(c_total - 1);
      means_cov(b, a) = means_cov(a, b);
    }
  }

  // Each speaker mean carries within-class noise with covariance within/n_s;
  // subtract the average of those terms.
  double mean_inv_count = 0.0;
  for (std::size_t c = 0; c < c_total; ++c) {
    mean_inv_count += 1.0 / static_cast<double>(stats.counts[c]);
  }
  mean_inv_count /= static_cast<double>(c_total);
  RealMatrix between(dim, dim);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = 0; b < dim; ++b) {
      between(a, b) = means_cov(a, b) - mean_inv_count * within(a, b);
    }
  }

  // Floor negative eigenvalues of the corrected between covariance to zero.
  numkit::SymEig eig = numkit::sym_eig(between);
  RealMatrix floored(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double lambda = std::max(eig.eigenvalues[i], 0.0);
    if (lambda == 0.0) continue;
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = 0; b < dim; ++b) {
        floored(a, b) +=
            lambda * eig.eigenvectors(a, i) * eig.eigenvectors(b, i);
      }
    }
  }

  return PldaModel::from_covariances(stats.global_mean, std::move(floored),
                                     std::move(within));
}

double plda_score(const PldaModel& model, const RealVector& enroll,
                  const RealVector& test) {
  if (enroll.dim() != model.dim() || test.dim() != model.dim()) {
    throw InputError(msg("plda_score: vector dims ", enroll.dim(), "/",
                         test.dim(), " vs model dim ", model.dim()));
  }
  const std::size_t dim = model.dim();
  RealVector ue(dim), ut(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double ae = 0.0, at = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      ae += model.transform(i, j) * (enroll[j] - model.mu[j]);
      at += model.transform(i, j) * (test[j] - model.mu[j]);
    }
    ue[i] = ae;
    ut[i] = at;
  }
  // In the transformed space the within covariance is I and the between
  // covariance diag(psi). Conditioned on one enrollment sample, the test
  // vector is N(psi/(psi+1) * ue, I + psi/(psi+1)); unconditioned it is
  // N(0, I + psi). The 2*pi terms cancel in the ratio.
  double same = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double shrink = model.psi[i] / (model.psi[i] + 1.0);
    const double mean = shrink * ue[i];
    const double var_same = 1.0 + shrink;
    const double var_diff = 1.0 + model.psi[i];
    const double r_same = ut[i] - mean;
    same += -0.5 * (std::log(var_same) + r_same * r_same / var_same);
    diff += -0.5 * (std::log(var_diff) + ut[i] * ut[i] / var_diff);
  }
  return same - diff;
}

double cosine_score(const RealVector& enroll, const RealVector& test) {
  const double ne = numkit::norm(enroll);
  const double nt = numkit::norm(test);
  if (ne == 0.0 || nt == 0.0) {
    throw InputError("cosine_score: zero vector");
  }
  return numkit::dot(enroll, test) / (ne * nt);
}

BackendModel fit_backend(const RealMatrix& embeddings,
                         const std::vector<std::size_t>& labels,
                         const BackendOptions& options) {
  BackendModel model;
  model.kind = options.kind;
  model.length_norm = options.length_norm;
  RealMatrix current = embeddings;
  if (options.lda_dim > 0) {
    model.has_lda = true;
    model.lda = fit_lda(embeddings, labels, options.lda_dim);
    current = lda_apply_rows(model.lda, current);
  }
  if (options.length_norm) {
    const double scale = std::sqrt(static_cast<double>(current.cols()));
    for (std::size_t i = 0; i < current.rows(); ++i) {
      RealVector row = current.row_copy(i);
      const double n = numkit::norm(row);
      if (n == 0.0) throw InputError("fit_backend: zero-length embedding");
      for (std::size_t d = 0; d < current.cols(); ++d) {
        current(i, d) = row[d] / n * scale;
      }
    }
  }
  if (options.kind == ScoringKind::kPlda) {
    model.plda = fit_plda(current, labels);
  }
  return model;
}

namespace {

RealVector prepare_vector(const BackendModel& model, const RealVector& x) {
  RealVector v = model.has_lda ? lda_apply(model.lda, x) : x;
  if (model.length_norm) {
    const double n = numkit::norm(v);
    if (n == 0.0) throw InputError("score_trials: zero-length embedding");
    const double scale = std::sqrt(static_cast<double>(v.dim())) / n;
    for (std::size_t d = 0; d < v.dim(); ++d) v[d] *= scale;
  }
  return v;
}

}  // namespace

eval::ScoreSet score_trials(const BackendModel& model,
                            const corpus::EmbeddingArchive& embeddings,
                            const std::vector<eval::Trial>& trials) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(embeddings.ids.size());
  for (std::size_t i = 0; i < embeddings.ids.size(); ++i) {
    index[embeddings.ids[i]] = i;
  }
  // Project each archive row once.
  std::vector<RealVector> prepared(embeddings.vectors.rows());
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    prepared[i] = prepare_vector(model, embeddings.vectors.row_copy(i));
  }

  std::vector<std::pair<std::size_t, std::size_t>> resolved(trials.size());
  for (std::size_t t = 0; t < trials.size(); ++t) {
    auto e = index.find(trials[t].enroll_id);
    if (e == index.end()) {
      throw InputError(msg("score_trials: unknown utterance id '",
                           trials[t].enroll_id, "'"));
    }
    auto s = index.find(trials[t].test_id);
    if (s == index.end()) {
      throw InputError(msg("score_trials: unknown utterance id '",
                           trials[t].test_id, "'"));
    }
    resolved[t] = {e->second, s->second};
  }

  eval::ScoreSet scores(trials.size());
  std::string error;
  const long long n = static_cast<long long>(trials.size());
#pragma omp parallel for num_threads(worker_count()) schedule(static)
  for (long long t = 0; t < n; ++t) {
    try {
      const std::size_t i = static_cast<std::size_t>(t);
      const RealVector& e = prepared[resolved[i].first];
      const RealVector& s = prepared[resolved[i].second];
      double value = model.kind == ScoringKind::kPlda
                         ? plda_score(model.plda, e, s)
                         : cosine_score(e, s);
      scores[i] = {trials[i], value};
    } catch (const std::exception& ex) {
#pragma omp critical
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw InputError(error);
  return scores;
}

void save_backend(const std::string& path, const BackendModel& model) {
  corpus::atomic_write(path, [&](std::ostream& os) {
    os << "kind=" << (model.kind == ScoringKind::kPlda ? "plda" : "cosine")
       << " lda=" << (model.has_lda ? 1 : 0)
       << " length_norm=" << (model.length_norm ? 1 : 0) << "\n";
    if (model.has_lda) {
      corpus::write_matrix(os, model.lda.projection);
      RealMatrix mean(1, model.lda.mean.dim());
      for (std::size_t d = 0; d < model.lda.mean.dim(); ++d) {
        mean(0, d) = model.lda.mean[d];
      }
      corpus::write_matrix(os, mean);
    }
    if (model.kind == ScoringKind::kPlda) {
      RealMatrix mu(1, model.plda.mu.dim());
      for (std::size_t d = 0; d < model.plda.mu.dim(); ++d) {
        mu(0, d) = model.plda.mu[d];
      }
      corpus::write_matrix(os, mu);
      corpus::write_matrix(os, model.plda.between_cov);
      corpus::write_matrix(os, model.plda.within_cov);
    }
  });
}

BackendModel load_backend(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(msg("cannot open ", path, " for reading"));
  std::string header;
  if (!std::getline(is, header)) throw FormatError("backend: missing header", 0);
  BackendModel model;
  {
    std::istringstream hs(header);
    std::string token;
    while (hs >> token) {
      auto eq = token.find('=');
      if (eq == std::string::npos) {
        throw FormatError(msg("backend: bad token '", token, "'"), 0);
      }
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "kind") {
        model.kind = value == "plda" ? ScoringKind::kPlda : ScoringKind::kCosine;
      } else if (key == "lda") {
        model.has_lda = value == "1";
      } else if (key == "length_norm") {
        model.length_norm = value == "1";
      } else {
        throw FormatError(msg("backend: unknown key '", key, "'"), 0);
      }
    }
  }
  if (model.has_lda) {
    model.lda.projection = corpus::read_matrix(is);
    RealMatrix mean = corpus::read_matrix(is);
    model.lda.mean = mean.row_copy(0);
  }
  if (model.kind == ScoringKind::kPlda) {
    RealMatrix mu = corpus::read_matrix(is);
    RealMatrix between = corpus::read_matrix(is);
    RealMatrix within = corpus::read_matrix(is);
    model.plda = PldaModel::from_covariances(mu.row_copy(0), std::move(between),
                                             std::move(within));
  }
  return model;
}

}  // namespace backend
}  // namespace gembed
