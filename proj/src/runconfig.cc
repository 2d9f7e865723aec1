// src/runconfig.cc

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

#include "gembed/runconfig.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "gembed/error.h"

namespace gembed {
namespace cli {

namespace {

struct KeyHandler {
  const char* key;
  const char* doc;
  std::function<void(RunConfig&, const std::string&)> apply;
};

std::size_t to_count(const std::string& key, const std::string& value) {
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    std::size_t pos = 0;
    unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(msg("config: key '", key, "' needs a non-negative integer, got '",
                          value, "'"));
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(msg("config: key '", key, "' needs a real number, got '",
                          value, "'"));
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(msg("config: key '", key, "' needs true/false, got '",
                        value, "'"));
}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = {
      {"synth.num_speakers", "training speakers",
       [](RunConfig& c, const std::string& v) { c.synth.num_speakers = to_count("synth.num_speakers", v); }},
      {"synth.utts_per_speaker", "utterances per training speaker",
       [](RunConfig& c, const std::string& v) { c.synth.utts_per_speaker = to_count("synth.utts_per_speaker", v); }},
      {"synth.frames_min", "minimum frames per utterance",
       [](RunConfig& c, const std::string& v) { c.synth.frames_min = to_count("synth.frames_min", v); }},
      {"synth.frames_max", "maximum frames per utterance",
       [](RunConfig& c, const std::string& v) { c.synth.frames_max = to_count("synth.frames_max", v); }},
      {"synth.feat_dim", "feature dimension",
       [](RunConfig& c, const std::string& v) { c.synth.feat_dim = to_count("synth.feat_dim", v); }},
      {"synth.speaker_scale", "between-speaker standard deviation",
       [](RunConfig& c, const std::string& v) { c.synth.speaker_scale = to_real("synth.speaker_scale", v); }},
      {"synth.channel_scale", "per-utterance offset standard deviation",
       [](RunConfig& c, const std::string& v) { c.synth.channel_scale = to_real("synth.channel_scale", v); }},
      {"synth.noise_scale", "per-frame noise standard deviation",
       [](RunConfig& c, const std::string& v) { c.synth.noise_scale = to_real("synth.noise_scale", v); }},
      {"synth.seed", "training corpus seed",
       [](RunConfig& c, const std::string& v) { c.synth.seed = to_count("synth.seed", v); }},
      {"synth.test_num_speakers", "evaluation speakers (fresh identities)",
       [](RunConfig& c, const std::string& v) { c.test_num_speakers = to_count("synth.test_num_speakers", v); }},
      {"synth.test_utts_per_speaker", "utterances per evaluation speaker",
       [](RunConfig& c, const std::string& v) { c.test_utts_per_speaker = to_count("synth.test_utts_per_speaker", v); }},
      {"synth.test_channel_scale", "evaluation channel scale (condition mismatch)",
       [](RunConfig& c, const std::string& v) { c.test_channel_scale = to_real("synth.test_channel_scale", v); }},
      {"synth.test_seed", "evaluation corpus seed",
       [](RunConfig& c, const std::string& v) { c.test_seed = to_count("synth.test_seed", v); }},
      {"trials.num_target", "target trials to sample",
       [](RunConfig& c, const std::string& v) { c.trials_num_target = to_count("trials.num_target", v); }},
      {"trials.num_nontarget", "nontarget trials to sample",
       [](RunConfig& c, const std::string& v) { c.trials_num_nontarget = to_count("trials.num_nontarget", v); }},
      {"trials.seed", "trial sampling seed",
       [](RunConfig& c, const std::string& v) { c.trials_seed = to_count("trials.seed", v); }},
      {"net.mode", "xvector | dvector",
       [](RunConfig& c, const std::string& v) {
         if (v == "xvector") c.mode = net::Mode::kXvector;
         else if (v == "dvector") c.mode = net::Mode::kDvector;
         else throw ConfigError(msg("config: net.mode must be xvector or dvector, got '", v, "'"));
       }},
      {"net.profile", "desk | paper dimension bundle",
       [](RunConfig& c, const std::string& v) {
         if (v == "desk") c.profile = Profile::kDesk;
         else if (v == "paper") c.profile = Profile::kPaper;
         else throw ConfigError(msg("config: net.profile must be desk or paper, got '", v, "'"));
       }},
      {"net.hidden_dim", "frame-stack width (desk profile)",
       [](RunConfig& c, const std::string& v) { c.hidden_dim = to_count("net.hidden_dim", v); }},
      {"net.embed_dim", "embedding width (desk profile)",
       [](RunConfig& c, const std::string& v) { c.embed_dim = to_count("net.embed_dim", v); }},
      {"loss.alpha", "regularization strength (default 0.05 xvector / 0.01 dvector)",
       [](RunConfig& c, const std::string& v) { c.alpha = to_real("loss.alpha", v); }},
      {"loss.norm_form", "squared | unsquared",
       [](RunConfig& c, const std::string& v) {
         if (v == "squared") c.norm_form = loss::NormForm::kSquared;
         else if (v == "unsquared") c.norm_form = loss::NormForm::kUnsquared;
         else throw ConfigError(msg("config: loss.norm_form must be squared or unsquared, got '", v, "'"));
       }},
      {"loss.use_bias", "keep a classifier bias during training",
       [](RunConfig& c, const std::string& v) { c.use_bias = to_bool("loss.use_bias", v); }},
      {"train.optimizer", "adam | sgd",
       [](RunConfig& c, const std::string& v) {
         if (v == "adam") c.train.optimizer = train::OptimizerKind::kAdam;
         else if (v == "sgd") c.train.optimizer = train::OptimizerKind::kSgd;
         else throw ConfigError(msg("config: train.optimizer must be adam or sgd, got '", v, "'"));
       }},
      {"train.learning_rate", "step size",
       [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_real("train.learning_rate", v); }},
      {"train.momentum", "sgd momentum",
       [](RunConfig& c, const std::string& v) { c.train.momentum = to_real("train.momentum", v); }},
      {"train.beta1", "adam first-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.beta1 = to_real("train.beta1", v); }},
      {"train.beta2", "adam second-moment decay",
       [](RunConfig& c, const std::string& v) { c.train.beta2 = to_real("train.beta2", v); }},
      {"train.adam_epsilon", "adam denominator floor",
       [](RunConfig& c, const std::string& v) { c.train.adam_epsilon = to_real("train.adam_epsilon", v); }},
      {"train.epochs", "training epochs",
       [](RunConfig& c, const std::string& v) { c.train.epochs = to_count("train.epochs", v); }},
      {"train.batch_size", "utterances (xvector) or frames (dvector) per batch",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = to_count("train.batch_size", v); }},
      {"train.seed", "training seed (init + shuffling)",
       [](RunConfig& c, const std::string& v) { c.train.seed = to_count("train.seed", v); }},
      {"train.replace_every", "full-info replacement cadence in epochs; 0 = never",
       [](RunConfig& c, const std::string& v) { c.train.replace_every = to_count("train.replace_every", v); }},
      {"train.shuffle", "shuffle batches each epoch",
       [](RunConfig& c, const std::string& v) { c.train.shuffle = to_bool("train.shuffle", v); }},
      {"train.diag_max_utts", "diagnostic subset cap; 0 = whole corpus",
       [](RunConfig& c, const std::string& v) { c.train.diag_max_utts = to_count("train.diag_max_utts", v); }},
      {"train.alpha_schedule", "epoch:alpha pairs separated by ';'",
       [](RunConfig& c, const std::string& v) {
         c.train.alpha_schedule.clear();
         if (v.empty()) return;
         std::istringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ';')) {
           auto colon = item.find(':');
           if (colon == std::string::npos) {
             throw ConfigError(msg("config: train.alpha_schedule entry '", item,
                                   "' is not epoch:alpha"));
           }
           c.train.alpha_schedule.push_back(
               {to_count("train.alpha_schedule", item.substr(0, colon)),
                to_real("train.alpha_schedule", item.substr(colon + 1))});
         }
       }},
      {"backend.kind", "plda | cosine",
       [](RunConfig& c, const std::string& v) {
         if (v == "plda") c.backend_kind = backend::ScoringKind::kPlda;
         else if (v == "cosine") c.backend_kind = backend::ScoringKind::kCosine;
         else throw ConfigError(msg("config: backend.kind must be plda or cosine, got '", v, "'"));
       }},
      {"backend.lda_dim", "LDA output dimension; 0 = min(speakers-1, 150)",
       [](RunConfig& c, const std::string& v) { c.lda_dim = to_count("backend.lda_dim", v); }},
      {"backend.length_norm", "project embeddings to the sqrt(dim) sphere",
       [](RunConfig& c, const std::string& v) { c.length_norm = to_bool("backend.length_norm", v); }},
      {"eval.p_target", "extra DCF operating point; 0 = none",
       [](RunConfig& c, const std::string& v) { c.eval_p_target = to_real("eval.p_target", v); }},
  };
  return table;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  for (const auto& handler : handlers()) {
    if (key == handler.key) {
      handler.apply(*this, value);
      return;
    }
  }
  throw ConfigError(msg("config: unknown key '", key, "'"));
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(msg("cannot open config file ", path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(msg("config ", path, ":", line_no, ": expected key = value"));
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError(msg("config ", path, ":", line_no, ": empty key or value"));
    }
    apply(key, value);
  }
}

double RunConfig::resolved_alpha() const {
  if (alpha >= 0.0) return alpha;
  return mode == net::Mode::kXvector ? 0.05 : 0.01;
}

loss::LossConfig RunConfig::loss_config() const {
  loss::LossConfig config;
  config.alpha = resolved_alpha();
  config.norm_form = norm_form;
  config.level = mode == net::Mode::kDvector ? loss::Level::kFrame
                                             : loss::Level::kUtterance;
  config.use_bias = use_bias;
  return config;
}

net::NetworkConfig RunConfig::network_config(std::size_t feat_dim,
                                             std::size_t num_speakers) const {
  if (profile == Profile::kPaper) {
    return net::NetworkConfig::paper_profile(mode, feat_dim, num_speakers);
  }
  return net::NetworkConfig::desk_profile(mode, feat_dim, num_speakers,
                                          hidden_dim, embed_dim);
}

corpus::SynthSpec RunConfig::test_synth_spec() const {
  corpus::SynthSpec spec = synth;
  spec.num_speakers = test_num_speakers;
  spec.utts_per_speaker = test_utts_per_speaker;
  spec.channel_scale = test_channel_scale;
  spec.seed = test_seed;
  return spec;
}

std::string RunConfig::documented_keys() {
  std::string out;
  for (const auto& handler : handlers()) {
    out += handler.key;
    out += "  # ";
    out += handler.doc;
    out += "\n";
  }
  return out;
}

}  // namespace cli
}  // namespace gembed
