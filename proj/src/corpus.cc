// src/corpus.cc

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

#include "gembed/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gembed/error.h"
#include "gembed/rng.h"

namespace gembed {
namespace corpus {

std::vector<std::vector<std::size_t>> Corpus::by_speaker() const {
  std::vector<std::vector<std::size_t>> groups(num_speakers);
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const Utterance& u = utterances[i];
    if (u.speaker >= num_speakers) {
      throw InputError(msg("corpus: utterance ", u.id, " has speaker ",
                           u.speaker, " outside [0, ", num_speakers, ")"));
    }
    groups[u.speaker].push_back(i);
  }
  return groups;
}

void Corpus::validate() const {
  if (num_speakers == 0 || utterances.empty()) {
    throw InputError("corpus: empty corpus");
  }
  auto groups = by_speaker();
  for (std::size_t s = 0; s < groups.size(); ++s) {
    if (groups[s].empty()) {
      throw InputError(msg("corpus: speaker ", s, " owns no utterances"));
    }
  }
  for (const Utterance& u : utterances) {
    if (u.frames.cols() != feat_dim) {
      throw InputError(msg("corpus: utterance ", u.id, " has feat_dim ",
                           u.frames.cols(), ", expected ", feat_dim));
    }
  }
}

static void validate_spec(const SynthSpec& spec) {
  if (spec.num_speakers == 0 || spec.utts_per_speaker == 0) {
    throw InputError("synth: need at least one speaker and one utterance per speaker");
  }
  if (spec.frames_min == 0 || spec.frames_min > spec.frames_max) {
    throw InputError(msg("synth: bad frame range [", spec.frames_min, ", ",
                         spec.frames_max, "]"));
  }
  if (spec.feat_dim == 0) throw InputError("synth: feat_dim must be positive");
  if (spec.speaker_scale < 0 || spec.channel_scale < 0 || spec.noise_scale < 0) {
    throw InputError("synth: scales must be non-negative");
  }
}

SynthOutput generate_detailed(const SynthSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  SynthOutput out;
  out.corpus.num_speakers = spec.num_speakers;
  out.corpus.feat_dim = spec.feat_dim;
  out.corpus.utterances.reserve(spec.num_speakers * spec.utts_per_speaker);
  out.speaker_latents = RealMatrix(spec.num_speakers, spec.feat_dim);

  char id_buf[64];
  for (std::size_t s = 0; s < spec.num_speakers; ++s) {
    for (std::size_t d = 0; d < spec.feat_dim; ++d) {
      out.speaker_latents(s, d) = rng.normal(0.0, spec.speaker_scale);
    }
    for (std::size_t u = 0; u < spec.utts_per_speaker; ++u) {
      std::size_t num_frames =
          spec.frames_min +
          rng.uniform_index(spec.frames_max - spec.frames_min + 1);
      RealVector offset(spec.feat_dim);
      for (std::size_t d = 0; d < spec.feat_dim; ++d) {
        offset[d] = rng.normal(0.0, spec.channel_scale);
      }
      Utterance utt;
      // Seed-prefixed ids keep archives from different corpora disjoint.
      std::snprintf(id_buf, sizeof(id_buf), "c%llu_s%04zu_u%04zu",
                    static_cast<unsigned long long>(spec.seed), s, u);
      utt.id = id_buf;
      utt.speaker = s;
      utt.frames = RealMatrix(num_frames, spec.feat_dim);
      for (std::size_t t = 0; t < num_frames; ++t) {
        for (std::size_t d = 0; d < spec.feat_dim; ++d) {
          utt.frames(t, d) = out.speaker_latents(s, d) + offset[d] +
                             rng.normal(0.0, spec.noise_scale);
        }
      }
      out.corpus.utterances.push_back(std::move(utt));
    }
  }
  return out;
}

Corpus generate(const SynthSpec& spec) {
  return generate_detailed(spec).corpus;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_fraction,
                                std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError(msg("split: train_fraction must lie in (0, 1), got ",
                         train_fraction));
  }
  corpus.validate();
  Rng rng(seed);
  std::vector<char> goes_to_train(corpus.utterances.size(), 0);
  for (auto& group : corpus.by_speaker()) {
    if (group.size() < 2) {
      throw ConfigError(msg("split: speaker of utterance ",
                            corpus.utterances[group[0]].id,
                            " has a single utterance; both halves need one"));
    }
    std::vector<std::size_t> shuffled = group;
    rng.shuffle(shuffled);
    std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_fraction * static_cast<double>(group.size()) + 0.5));
    n_train = std::max<std::size_t>(1, std::min(n_train, group.size() - 1));
    for (std::size_t i = 0; i < n_train; ++i) goes_to_train[shuffled[i]] = 1;
  }
  Corpus train, test;
  train.num_speakers = test.num_speakers = corpus.num_speakers;
  train.feat_dim = test.feat_dim = corpus.feat_dim;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    (goes_to_train[i] ? train : test).utterances.push_back(corpus.utterances[i]);
  }
  return {std::move(train), std::move(test)};
}

std::vector<eval::Trial> make_trials(const Corpus& test, std::size_t num_target,
                                     std::size_t num_nontarget,
                                     std::uint64_t seed) {
  test.validate();
  using Pair = std::pair<std::size_t, std::size_t>;  // corpus indices, i < j
  std::vector<Pair> target_pool, nontarget_pool;
  for (std::size_t i = 0; i < test.utterances.size(); ++i) {
    for (std::size_t j = i + 1; j < test.utterances.size(); ++j) {
      if (test.utterances[i].speaker == test.utterances[j].speaker) {
        target_pool.push_back({i, j});
      } else {
        nontarget_pool.push_back({i, j});
      }
    }
  }
  if (num_target > target_pool.size()) {
    throw ConfigError(msg("make_trials: requested ", num_target,
                          " target trials but only ", target_pool.size(),
                          " distinct same-speaker pairs exist"));
  }
  if (num_nontarget > nontarget_pool.size()) {
    throw ConfigError(msg("make_trials: requested ", num_nontarget,
                          " nontarget trials but only ", nontarget_pool.size(),
                          " distinct cross-speaker pairs exist"));
  }
  Rng rng(seed);
  rng.shuffle(target_pool);
  rng.shuffle(nontarget_pool);
  std::vector<eval::Trial> trials;
  trials.reserve(num_target + num_nontarget);
  for (std::size_t k = 0; k < num_target; ++k) {
    trials.push_back({test.utterances[target_pool[k].first].id,
                      test.utterances[target_pool[k].second].id, true});
  }
  for (std::size_t k = 0; k < num_nontarget; ++k) {
    trials.push_back({test.utterances[nontarget_pool[k].first].id,
                      test.utterances[nontarget_pool[k].second].id, false});
  }
  return trials;
}

}  // namespace corpus
}  // namespace gembed
