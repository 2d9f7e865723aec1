// gembed/trainer.h

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

#ifndef GEMBED_TRAINER_H_
#define GEMBED_TRAINER_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gembed/corpus.h"
#include "gembed/loss.h"
#include "gembed/network.h"

namespace gembed {
namespace train {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9, beta2 = 0.999, adam_epsilon = 1e-8;
  std::size_t epochs = 20;
  /// Utterances per batch in xvector mode, frames per batch in dvector mode.
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Breakpoints (epoch, alpha); the active alpha is the last breakpoint at
  /// or before the current epoch, falling back to LossConfig::alpha.
  std::vector<std::pair<std::size_t, double>> alpha_schedule;
  /// Apply full-info replacement every this many epochs; 0 = never.
  std::size_t replace_every = 0;
  bool shuffle = true;
  /// Cap on the fixed diagnostic subset; 0 keeps the whole corpus.
  std::size_t diag_max_utts = 0;

  void validate() const;
};

/// Per-epoch health statistics, computed on a fixed diagnostic subset.
///   theta_to_mean_gap     mean over speakers of
///                         ||theta_s - v(s)|| / (||v(s)|| + 1e-12)
///   within_class_isotropy lambda_max / lambda_min of the pooled
///                         within-class covariance of the embeddings
///   skewness_norm         mean absolute per-dimension standardized third
///                         central moment of the within-class residuals
///   excess_kurtosis_norm  same for the fourth moment, minus 3
struct DiagnosticsRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double ce_part = 0.0;
  double r_part = 0.0;
  double theta_to_mean_gap = 0.0;
  double within_class_isotropy = 0.0;
  double skewness_norm = 0.0;
  double excess_kurtosis_norm = 0.0;
};

/// Flat optimizer state, one slot per tensor in tensor_refs order.
struct OptimizerState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;  // first moment / sgd velocity
  std::vector<std::vector<double>> v;  // second moment (adam)
};

struct Checkpoint {
  net::NetworkConfig net_config;
  loss::LossConfig loss_config;
  TrainConfig train_config;
  net::NetworkParams params;
  std::size_t epochs_done = 0;
  OptimizerState opt_state;
  std::string rng_state;
};

struct TrainResult {
  net::NetworkParams params;
  std::vector<DiagnosticsRecord> diagnostics;
  Checkpoint checkpoint;  // state after the last epoch; resume() continues it
};

/// Mini-batch training of the combined objective. Deterministic: identical
/// inputs and seed give bit-identical parameters and diagnostics, for any
/// worker count. Throws NumericalError when the objective stops being finite.
TrainResult train(const corpus::Corpus& corpus, const net::NetworkConfig& net_config,
                  const loss::LossConfig& loss_config, const TrainConfig& train_config);

/// Continues a checkpointed run until `total_epochs`. Resuming reproduces the
/// uninterrupted run bit-exactly.
TrainResult resume(const Checkpoint& checkpoint, const corpus::Corpus& corpus,
                   std::size_t total_epochs);

/// One batch worth of gradients, shared by the training loop and the
/// finite-difference harness. `frame_rows` selects output frames of the
/// utterance in dvector mode and must be empty in xvector mode.
struct BatchEntry {
  std::size_t utterance = 0;
  std::vector<std::size_t> frame_rows;
};

/// value = ce_weight * CE + alpha * R. ce_weight in {0, 1} selects the plain
/// regularizer path used by gradient checks.
struct ObjectiveSpec {
  double ce_weight = 1.0;
  double alpha = 0.0;
  loss::NormForm norm_form = loss::NormForm::kSquared;
};

struct BatchGradient {
  net::NetworkParams grads;
  double value = 0.0;
  double ce = 0.0;
  double r = 0.0;
};

BatchGradient batch_gradient(const net::NetworkParams& params,
                             const net::NetworkConfig& net_config,
                             const corpus::Corpus& corpus,
                             const std::vector<BatchEntry>& entries,
                             const ObjectiveSpec& objective);

/// Compares reverse-mode gradients against central finite differences
/// (h = 1e-5) on an internally built small tanh network with three speakers,
/// for plain CE, the regularizer alone (both norm forms) and CE + alpha*R.
/// The reported value is the worst relative error
/// |a - n| / max(|a|, |n|, 1e-3) over every parameter and objective.
/// Only the mode is taken from `net_config`; alpha and the norm form come
/// from `loss_config` (alpha = 0 is checked as 0.05).
double gradient_check(const net::NetworkConfig& net_config,
                      const loss::LossConfig& loss_config, std::uint64_t seed);

/// Utterance-level embeddings for every utterance of `subset`, one row per
/// utterance in corpus order. Parallel over utterances, deterministic.
RealMatrix extract_embeddings(const net::NetworkParams& params,
                              const net::NetworkConfig& net_config,
                              const corpus::Corpus& subset);

/// Computes one DiagnosticsRecord on `subset` with the given parameters. The
/// four statistics are computed on utterance-level embeddings in both modes;
/// the objective parts follow the training level (frames for dvector).
DiagnosticsRecord diagnose(const net::NetworkParams& params,
                           const net::NetworkConfig& net_config,
                           const loss::LossConfig& loss_config,
                           const corpus::Corpus& subset);

/// UTF-8 CSV with header "epoch,objective,ce,r,theta_gap,isotropy,skew,kurtosis".
std::string diagnostics_csv(const std::vector<DiagnosticsRecord>& records);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace train
}  // namespace gembed

#endif  // GEMBED_TRAINER_H_
