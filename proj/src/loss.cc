// src/loss.cc

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

#include "gembed/loss.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gembed/error.h"

namespace gembed {
namespace loss {

namespace {

void check_labels(const std::vector<std::size_t>& labels, std::size_t rows,
                  std::size_t num_speakers, const char* where) {
  if (labels.size() != rows) {
    throw InputError(msg(where, ": ", rows, " rows but ", labels.size(),
                         " labels"));
  }
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] >= num_speakers) {
      throw InputError(msg(where, ": label ", labels[t], " at row ", t,
                           " outside [0, ", num_speakers, ")"));
    }
  }
}

}  // namespace

SpeakerMeans speaker_means(const RealMatrix& embeddings,
                           const std::vector<std::size_t>& labels,
                           std::size_t num_speakers) {
  if (embeddings.rows() == 0) throw InputError("speaker_means: empty input");
  check_labels(labels, embeddings.rows(), num_speakers, "speaker_means");
  SpeakerMeans means;
  means.v = RealMatrix(num_speakers, embeddings.cols());
  means.present.assign(num_speakers, 0);
  std::vector<std::size_t> counts(num_speakers, 0);
  for (std::size_t t = 0; t < embeddings.rows(); ++t) {
    const std::size_t s = labels[t];
    ++counts[s];
    const double* row = embeddings.row(t);
    double* acc = means.v.row(s);
    for (std::size_t d = 0; d < embeddings.cols(); ++d) acc[d] += row[d];
  }
  for (std::size_t s = 0; s < num_speakers; ++s) {
    if (counts[s] == 0) continue;
    means.present[s] = 1;
    double* acc = means.v.row(s);
    for (std::size_t d = 0; d < embeddings.cols(); ++d) {
      acc[d] /= static_cast<double>(counts[s]);
    }
  }
  return means;
}

RealVector nonparam_probs(const RealVector& embedding, const SpeakerMeans& means) {
  if (embedding.dim() != means.v.cols()) {
    throw InputError(msg("nonparam_probs: embedding dim ", embedding.dim(),
                         " vs means dim ", means.v.cols()));
  }
  for (std::size_t s = 0; s < means.present.size(); ++s) {
    if (!means.present[s]) {
      throw InputError(msg("nonparam_probs: speaker ", s, " has no mean"));
    }
  }
  RealMatrix logits(1, means.v.rows());
  for (std::size_t s = 0; s < means.v.rows(); ++s) {
    const double* vs = means.v.row(s);
    double acc = 0.0;
    for (std::size_t d = 0; d < embedding.dim(); ++d) acc += embedding[d] * vs[d];
    logits(0, s) = acc;
  }
  RealMatrix probs = numkit::softmax_rows(logits);
  return probs.row_copy(0);
}

CrossEntropyResult cross_entropy(const RealMatrix& logits,
                                 const std::vector<std::size_t>& labels) {
  if (logits.rows() == 0) throw InputError("cross_entropy: empty batch");
  check_labels(labels, logits.rows(), logits.cols(), "cross_entropy");
  const std::size_t batch = logits.rows(), classes = logits.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  CrossEntropyResult result;
  result.value = 0.0;
  result.grad_logits = RealMatrix(batch, classes);
  for (std::size_t t = 0; t < batch; ++t) {
    const double* x = logits.row(t);
    double* g = result.grad_logits.row(t);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < classes; ++s) mx = std::max(mx, x[s]);
    double sum = 0.0;
    for (std::size_t s = 0; s < classes; ++s) sum += std::exp(x[s] - mx);
    const double lse = mx + std::log(sum);
    result.value += (lse - x[labels[t]]) * inv_batch;
    for (std::size_t s = 0; s < classes; ++s) {
      g[s] = std::exp(x[s] - lse) * inv_batch;
    }
    g[labels[t]] -= inv_batch;
  }
  return result;
}

RegularizerResult gauss_regularizer(const RealMatrix& embeddings,
                                    const std::vector<std::size_t>& labels,
                                    const ClassifierHead& head,
                                    const LossConfig& config) {
  if (embeddings.rows() == 0) throw InputError("gauss_regularizer: empty batch");
  if (embeddings.cols() != head.theta.cols()) {
    throw InputError(msg("gauss_regularizer: embedding dim ", embeddings.cols(),
                         " vs classifier dim ", head.theta.cols()));
  }
  check_labels(labels, embeddings.rows(), head.theta.rows(), "gauss_regularizer");
  const std::size_t batch = embeddings.rows(), dim = embeddings.cols();
  const double inv_batch = 1.0 / static_cast<double>(batch);
  RegularizerResult result;
  result.value = 0.0;
  result.grad_embeddings = RealMatrix(batch, dim);
  result.grad_theta = RealMatrix(head.theta.rows(), dim);
  for (std::size_t t = 0; t < batch; ++t) {
    const std::size_t s = labels[t];
    const double* f = embeddings.row(t);
    const double* th = head.theta.row(s);
    double* ge = result.grad_embeddings.row(t);
    double* gt = result.grad_theta.row(s);
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = f[d] - th[d];
      sq += diff * diff;
    }
    if (config.norm_form == NormForm::kSquared) {
      result.value += sq * inv_batch;
      for (std::size_t d = 0; d < dim; ++d) {
        const double g = 2.0 * (f[d] - th[d]) * inv_batch;
        ge[d] += g;
        gt[d] -= g;
      }
    } else {
      const double dist = std::sqrt(sq);
      result.value += dist * inv_batch;
      // At the kink the subgradient is taken as zero.
      if (dist >= 1e-12) {
        for (std::size_t d = 0; d < dim; ++d) {
          const double g = (f[d] - th[d]) / dist * inv_batch;
          ge[d] += g;
          gt[d] -= g;
        }
      }
    }
  }
  return result;
}

ObjectiveResult combined_objective(const RealMatrix& logits,
                                   const RealMatrix& embeddings,
                                   const std::vector<std::size_t>& labels,
                                   const ClassifierHead& head,
                                   const LossConfig& config) {
  if (config.alpha < 0.0) {
    throw InputError(msg("combined_objective: alpha must be >= 0, got ",
                         config.alpha));
  }
  if (logits.rows() != embeddings.rows()) {
    throw InputError(msg("combined_objective: ", logits.rows(),
                         " logit rows vs ", embeddings.rows(),
                         " embedding rows"));
  }
  CrossEntropyResult ce = cross_entropy(logits, labels);
  RegularizerResult reg = gauss_regularizer(embeddings, labels, head, config);
  ObjectiveResult result;
  result.ce = ce.value;
  result.r = reg.value;
  result.grad_logits = std::move(ce.grad_logits);
  if (config.alpha == 0.0) {
    // Exact reduction to plain CE: value untouched, regularizer grads zeroed.
    result.value = ce.value;
    result.grad_embeddings = RealMatrix(embeddings.rows(), embeddings.cols());
    result.grad_theta = RealMatrix(head.theta.rows(), head.theta.cols());
    return result;
  }
  result.value = ce.value + config.alpha * reg.value;
  result.grad_embeddings = std::move(reg.grad_embeddings);
  result.grad_theta = std::move(reg.grad_theta);
  for (std::size_t i = 0; i < result.grad_embeddings.size(); ++i) {
    result.grad_embeddings.data()[i] *= config.alpha;
  }
  for (std::size_t i = 0; i < result.grad_theta.size(); ++i) {
    result.grad_theta.data()[i] *= config.alpha;
  }
  return result;
}

ClassifierHead full_info_replace(const ClassifierHead& head,
                                 const SpeakerMeans& means) {
  if (means.v.rows() != head.theta.rows() ||
      means.v.cols() != head.theta.cols()) {
    throw InputError(msg("full_info_replace: means are ", means.v.rows(), "x",
                         means.v.cols(), ", classifier is ", head.theta.rows(),
                         "x", head.theta.cols()));
  }
  std::string missing;
  for (std::size_t s = 0; s < means.present.size(); ++s) {
    if (!means.present[s]) {
      if (!missing.empty()) missing += ", ";
      missing += std::to_string(s);
    }
  }
  if (!missing.empty()) {
    throw InputError(msg("full_info_replace: no mean for speakers [", missing, "]"));
  }
  ClassifierHead updated = head;
  updated.theta = means.v;
  updated.bias = RealVector(head.bias.dim(), 0.0);
  return updated;
}

}  // namespace loss
}  // namespace gembed
