// gembed/loss.h

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

#ifndef GEMBED_LOSS_H_
#define GEMBED_LOSS_H_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gembed/matrix.h"

namespace gembed {
namespace loss {

/// The classification layer: one weight row per training speaker, plus an
/// optional bias. The Gaussian constraint pulls each row toward the mean
/// embedding of its speaker.
struct ClassifierHead {
  RealMatrix theta;  // num_speakers x embed_dim
  RealVector bias;   // num_speakers; ignored when has_bias is false
  bool has_bias = true;
};

enum class NormForm {
  kSquared,    // sum of squared distances; log-density of an isotropic Gaussian
  kUnsquared,  // plain L2 distance
};

enum class Level {
  kUtterance,  // one embedding per utterance
  kFrame,      // one feature per frame
};

struct LossConfig {
  double alpha = 0.05;
  NormForm norm_form = NormForm::kSquared;
  Level level = Level::kUtterance;
  bool use_bias = true;
};

/// Per-speaker mean embeddings. Speakers absent from the computation are
/// flagged rather than zero-filled.
struct SpeakerMeans {
  RealMatrix v;  // num_speakers x embed_dim
  std::vector<std::uint8_t> present;
};

/// Arithmetic mean of the embeddings of each speaker present in the batch.
SpeakerMeans speaker_means(const RealMatrix& embeddings,
                           const std::vector<std::size_t>& labels,
                           std::size_t num_speakers);

/// Posterior over speakers from plain dot products against the speaker
/// means, softmax-normalized. No bias term.
RealVector nonparam_probs(const RealVector& embedding, const SpeakerMeans& means);

struct CrossEntropyResult {
  double value;
  RealMatrix grad_logits;  // (softmax - onehot) / batch
};

/// Mean negative log-probability of the true speakers. One label per logit
/// row; batch-mean reduction.
CrossEntropyResult cross_entropy(const RealMatrix& logits,
                                 const std::vector<std::size_t>& labels);

struct RegularizerResult {
  double value;
  RealMatrix grad_embeddings;  // batch x embed_dim
  RealMatrix grad_theta;       // num_speakers x embed_dim
};

/// Gaussian-constraint penalty: the distance between each embedding and its
/// speaker's classifier row, batch-mean reduced. The squared form uses
/// ||f - theta||^2; the unsquared form uses the norm itself with the gradient
/// zeroed within 1e-12 of the kink.
RegularizerResult gauss_regularizer(const RealMatrix& embeddings,
                                    const std::vector<std::size_t>& labels,
                                    const ClassifierHead& head,
                                    const LossConfig& config);

struct ObjectiveResult {
  double value;      // ce + alpha * r
  double ce;
  double r;
  RealMatrix grad_logits;
  RealMatrix grad_embeddings;  // the alpha-scaled regularizer part
  RealMatrix grad_theta;       // the alpha-scaled regularizer part
};

/// Combined training objective. With alpha = 0 this reduces bit-exactly to
/// cross_entropy (the regularizer gradients come back as zeros).
ObjectiveResult combined_objective(const RealMatrix& logits,
                                   const RealMatrix& embeddings,
                                   const std::vector<std::size_t>& labels,
                                   const ClassifierHead& head,
                                   const LossConfig& config);

/// Replaces every classifier row with the speaker mean and zeroes the bias,
/// turning the head into the non-parametric classifier over dot products.
/// Every speaker must be present in `means`.
ClassifierHead full_info_replace(const ClassifierHead& head,
                                 const SpeakerMeans& means);

}  // namespace loss
}  // namespace gembed

#endif  // GEMBED_LOSS_H_
