// gembed/corpus.h

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

#ifndef GEMBED_CORPUS_H_
#define GEMBED_CORPUS_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gembed/matrix.h"
#include "gembed/metrics.h"

namespace gembed {
namespace corpus {

/// A labeled sequence of frame-level feature vectors
/// (num_frames x feat_dim, row per frame).
struct Utterance {
  std::string id;
  std::size_t speaker = 0;
  RealMatrix frames;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::size_t num_speakers = 0;
  std::size_t feat_dim = 0;

  /// Utterance indices grouped by speaker, in corpus order.
  std::vector<std::vector<std::size_t>> by_speaker() const;

  /// Checks the structural invariants: contiguous speaker range, every
  /// speaker owning at least one utterance, constant feat_dim.
  void validate() const;
};

/// Parameters of the synthetic corpus generator. Features are drawn directly
/// in an embedding-friendly Gaussian space: per-speaker latent mean, per-
/// utterance channel offset, per-frame noise. The seed fully determines the
/// output.
struct SynthSpec {
  std::size_t num_speakers = 20;
  std::size_t utts_per_speaker = 30;
  std::size_t frames_min = 50;
  std::size_t frames_max = 300;
  std::size_t feat_dim = 20;
  double speaker_scale = 1.0;   // between-speaker std
  double channel_scale = 0.3;   // per-utterance offset std
  double noise_scale = 0.5;     // per-frame std
  std::uint64_t seed = 0;
};

struct SynthOutput {
  Corpus corpus;
  RealMatrix speaker_latents;  // num_speakers x feat_dim, the drawn means
};

SynthOutput generate_detailed(const SynthSpec& spec);

Corpus generate(const SynthSpec& spec);

/// Per-speaker stratified split. Each speaker keeps
/// round(train_fraction * n) utterances in the train half, clamped so both
/// halves stay nonempty; a single-utterance speaker cannot be split.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t seed);

/// Samples target (same-speaker) and nontarget (cross-speaker) trials
/// without replacement from the distinct unordered utterance pairs of the
/// test corpus. No trial pairs an utterance with itself and no ordered pair
/// repeats.
std::vector<eval::Trial> make_trials(const Corpus& test, std::size_t num_target,
                                     std::size_t num_nontarget,
                                     std::uint64_t seed);

}  // namespace corpus
}  // namespace gembed

#endif  // GEMBED_CORPUS_H_
