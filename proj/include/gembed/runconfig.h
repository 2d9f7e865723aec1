// gembed/runconfig.h

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

#ifndef GEMBED_RUNCONFIG_H_
#define GEMBED_RUNCONFIG_H_

#include <string>
#include <vector>

#include "gembed/backend.h"
#include "gembed/corpus.h"
#include "gembed/loss.h"
#include "gembed/network.h"
#include "gembed/trainer.h"

namespace gembed {
namespace cli {

enum class Profile { kDesk, kPaper };

/// Flat configuration for the whole pipeline, read from `key = value` files
/// (UTF-8, `#` comments, dotted keys). Unknown keys are rejected.
/// Command-line flags override file values.
struct RunConfig {
  // Training corpus synthesis.
  corpus::SynthSpec synth;
  // Evaluation corpus synthesis. Defaults mimic a condition mismatch: fewer
  // fresh speakers and a doubled per-utterance channel offset.
  std::size_t test_num_speakers = 12;
  std::size_t test_utts_per_speaker = 12;
  double test_channel_scale = 0.6;
  std::uint64_t test_seed = 1000;

  std::size_t trials_num_target = 500;
  std::size_t trials_num_nontarget = 2000;
  std::uint64_t trials_seed = 7;

  net::Mode mode = net::Mode::kXvector;
  Profile profile = Profile::kDesk;
  std::size_t hidden_dim = 64;  // desk profile only
  std::size_t embed_dim = 64;   // desk profile only

  /// Negative = unset; resolved per mode (0.05 xvector / 0.01 dvector).
  double alpha = -1.0;
  loss::NormForm norm_form = loss::NormForm::kSquared;
  bool use_bias = true;

  train::TrainConfig train;

  backend::ScoringKind backend_kind = backend::ScoringKind::kPlda;
  /// 0 = auto: min(num_speakers - 1, 150).
  std::size_t lda_dim = 0;
  bool length_norm = false;

  /// Extra DCF operating point for `eval`; 0 disables it.
  double eval_p_target = 0.0;

  /// Applies one key=value pair; throws ConfigError for unknown keys or
  /// unparsable values.
  void apply(const std::string& key, const std::string& value);

  /// Reads a config file and applies every pair in order.
  void load_file(const std::string& path);

  /// The effective regularization strength for the configured mode.
  double resolved_alpha() const;

  loss::LossConfig loss_config() const;
  net::NetworkConfig network_config(std::size_t feat_dim,
                                    std::size_t num_speakers) const;
  corpus::SynthSpec test_synth_spec() const;

  /// One "key = value  # doc" line per known key.
  static std::string documented_keys();
};

}  // namespace cli
}  // namespace gembed

#endif  // GEMBED_RUNCONFIG_H_
