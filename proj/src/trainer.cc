// src/trainer.cc

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

#include "gembed/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gembed/corpus_io.h"
#include "gembed/error.h"
#include "gembed/rng.h"
#include "gembed/threads.h"

namespace gembed {
namespace train {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5u;

void accumulate(net::NetworkParams* total, const net::NetworkParams& part) {
  auto add_layer = [](net::LayerParams* dst, const net::LayerParams& src) {
    for (std::size_t i = 0; i < src.weight.size(); ++i) {
      dst->weight.data()[i] += src.weight.data()[i];
    }
    for (std::size_t i = 0; i < src.bias.dim(); ++i) dst->bias[i] += src.bias[i];
  };
  for (std::size_t l = 0; l < part.tdnn.size(); ++l) {
    add_layer(&total->tdnn[l], part.tdnn[l]);
  }
  for (std::size_t l = 0; l < part.post_pool.size(); ++l) {
    add_layer(&total->post_pool[l], part.post_pool[l]);
  }
  for (std::size_t i = 0; i < part.head.theta.size(); ++i) {
    total->head.theta.data()[i] += part.head.theta.data()[i];
  }
  for (std::size_t i = 0; i < part.head.bias.dim(); ++i) {
    total->head.bias[i] += part.head.bias[i];
  }
}

net::NetworkParams zeros_like(const net::NetworkParams& params) {
  net::NetworkParams z;
  z.tdnn.resize(params.tdnn.size());
  for (std::size_t l = 0; l < params.tdnn.size(); ++l) {
    z.tdnn[l].weight = RealMatrix(params.tdnn[l].weight.rows(),
                                  params.tdnn[l].weight.cols());
    z.tdnn[l].bias = RealVector(params.tdnn[l].bias.dim());
  }
  z.post_pool.resize(params.post_pool.size());
  for (std::size_t l = 0; l < params.post_pool.size(); ++l) {
    z.post_pool[l].weight = RealMatrix(params.post_pool[l].weight.rows(),
                                       params.post_pool[l].weight.cols());
    z.post_pool[l].bias = RealVector(params.post_pool[l].bias.dim());
  }
  z.head.theta = RealMatrix(params.head.theta.rows(), params.head.theta.cols());
  z.head.bias = RealVector(params.head.bias.dim());
  z.head.has_bias = params.head.has_bias;
  return z;
}

void ensure_state(OptimizerState* state, std::vector<net::TensorRef>& refs) {
  if (!state->m.empty()) return;
  state->m.resize(refs.size());
  state->v.resize(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    state->m[i].assign(refs[i].size, 0.0);
    state->v[i].assign(refs[i].size, 0.0);
  }
}

void optimizer_step(const TrainConfig& config, net::NetworkParams* params,
                    net::NetworkParams* grads, OptimizerState* state) {
  auto param_refs = net::tensor_refs(*params);
  auto grad_refs = net::tensor_refs(*grads);
  ensure_state(state, param_refs);
  ++state->step;
  if (config.optimizer == OptimizerKind::kAdam) {
    const double b1 = config.beta1, b2 = config.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state->step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state->step));
    for (std::size_t r = 0; r < param_refs.size(); ++r) {
      double* p = param_refs[r].data;
      const double* g = grad_refs[r].data;
      double* m = state->m[r].data();
      double* v = state->v[r].data();
      for (std::size_t i = 0; i < param_refs[r].size; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= config.learning_rate * m_hat /
                (std::sqrt(v_hat) + config.adam_epsilon);
      }
    }
  } else {
    for (std::size_t r = 0; r < param_refs.size(); ++r) {
      double* p = param_refs[r].data;
      const double* g = grad_refs[r].data;
      double* vel = state->m[r].data();
      for (std::size_t i = 0; i < param_refs[r].size; ++i) {
        vel[i] = config.momentum * vel[i] + g[i];
        p[i] -= config.learning_rate * vel[i];
      }
    }
  }
}

double alpha_for(const loss::LossConfig& loss_config, const TrainConfig& config,
                 std::size_t epoch) {
  double alpha = loss_config.alpha;
  for (const auto& [at, value] : config.alpha_schedule) {
    if (at <= epoch) alpha = value;
  }
  return alpha;
}

}  // namespace

RealMatrix extract_embeddings(const net::NetworkParams& params,
                              const net::NetworkConfig& net_config,
                              const corpus::Corpus& subset) {
  RealMatrix embeddings(subset.utterances.size(), net_config.embed_dim);
  std::string error;
  const long long n = static_cast<long long>(subset.utterances.size());
#pragma omp parallel for num_threads(worker_count()) schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    try {
      RealVector e = net::extract_embedding(
          params, net_config, subset.utterances[static_cast<std::size_t>(i)].frames);
      embeddings.set_row(static_cast<std::size_t>(i), e);
    } catch (const std::exception& ex) {
#pragma omp critical
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw InputError(error);
  return embeddings;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  for (const auto& [epoch, alpha] : alpha_schedule) {
    (void)epoch;
    if (alpha < 0.0) throw ConfigError("train: scheduled alpha must be >= 0");
  }
}

BatchGradient batch_gradient(const net::NetworkParams& params,
                             const net::NetworkConfig& net_config,
                             const corpus::Corpus& corpus,
                             const std::vector<BatchEntry>& entries,
                             const ObjectiveSpec& objective) {
  if (entries.empty()) throw InputError("batch_gradient: empty batch");
  const bool frame_level = net_config.mode == net::Mode::kDvector;

  // Forward every utterance of the batch in parallel.
  std::vector<net::UtteranceForward> forwards(entries.size());
  std::string error;
  const long long n_entries = static_cast<long long>(entries.size());
#pragma omp parallel for num_threads(worker_count()) schedule(dynamic)
  for (long long e = 0; e < n_entries; ++e) {
    try {
      const BatchEntry& entry = entries[static_cast<std::size_t>(e)];
      forwards[static_cast<std::size_t>(e)] = net::forward_utterance(
          params, net_config, corpus.utterances[entry.utterance].frames);
    } catch (const std::exception& ex) {
#pragma omp critical
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw InputError(error);

  // Assemble the batch matrices row by row.
  std::size_t batch_rows = 0;
  for (const auto& entry : entries) {
    batch_rows += frame_level ? entry.frame_rows.size() : 1;
  }
  if (batch_rows == 0) throw InputError("batch_gradient: no rows selected");
  RealMatrix logits(batch_rows, net_config.num_speakers);
  RealMatrix embeddings(batch_rows, net_config.embed_dim);
  std::vector<std::size_t> labels(batch_rows);
  std::vector<std::size_t> row_base(entries.size());
  std::size_t row = 0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const BatchEntry& entry = entries[e];
    const std::size_t speaker = corpus.utterances[entry.utterance].speaker;
    row_base[e] = row;
    if (frame_level) {
      const std::size_t t_out = forwards[e].trace.embeddings.rows();
      for (std::size_t fr : entry.frame_rows) {
        if (fr >= t_out) {
          throw InputError(msg("batch_gradient: frame row ", fr,
                               " out of range for utterance ",
                               corpus.utterances[entry.utterance].id));
        }
        for (std::size_t s = 0; s < net_config.num_speakers; ++s) {
          logits(row, s) = forwards[e].logits(fr, s);
        }
        for (std::size_t d = 0; d < net_config.embed_dim; ++d) {
          embeddings(row, d) = forwards[e].trace.embeddings(fr, d);
        }
        labels[row] = speaker;
        ++row;
      }
    } else {
      if (!entry.frame_rows.empty()) {
        throw InputError("batch_gradient: frame_rows set in xvector mode");
      }
      for (std::size_t s = 0; s < net_config.num_speakers; ++s) {
        logits(row, s) = forwards[e].logits(0, s);
      }
      for (std::size_t d = 0; d < net_config.embed_dim; ++d) {
        embeddings(row, d) = forwards[e].trace.embeddings(0, d);
      }
      labels[row] = speaker;
      ++row;
    }
  }

  BatchGradient result;
  loss::CrossEntropyResult ce;
  ce.value = 0.0;
  if (objective.ce_weight != 0.0) {
    ce = loss::cross_entropy(logits, labels);
    result.ce = ce.value;
  } else {
    ce.grad_logits = RealMatrix(batch_rows, net_config.num_speakers);
  }
  loss::RegularizerResult reg;
  reg.value = 0.0;
  const bool need_reg = objective.alpha != 0.0;
  if (need_reg) {
    loss::LossConfig reg_config;
    reg_config.norm_form = objective.norm_form;
    loss::ClassifierHead head = params.head;
    reg = loss::gauss_regularizer(embeddings, labels, head, reg_config);
    result.r = reg.value;
  }
  result.value = objective.ce_weight * result.ce + objective.alpha * result.r;

  // Backward per utterance into private buffers, then reduce in entry order
  // so the sum never depends on thread scheduling.
  std::vector<net::NetworkParams> partials(entries.size());
#pragma omp parallel for num_threads(worker_count()) schedule(dynamic)
  for (long long e = 0; e < n_entries; ++e) {
    try {
      const std::size_t idx = static_cast<std::size_t>(e);
      const BatchEntry& entry = entries[idx];
      const net::ForwardTrace& trace = forwards[idx].trace;
      net::OutputGrad grad;
      grad.logits_grad = RealMatrix(trace.logits.rows(), trace.logits.cols());
      grad.embeddings_grad =
          RealMatrix(trace.embeddings.rows(), trace.embeddings.cols());
      if (frame_level) {
        std::size_t local = row_base[idx];
        for (std::size_t fr : entry.frame_rows) {
          for (std::size_t s = 0; s < net_config.num_speakers; ++s) {
            grad.logits_grad(fr, s) =
                objective.ce_weight * ce.grad_logits(local, s);
          }
          if (need_reg) {
            for (std::size_t d = 0; d < net_config.embed_dim; ++d) {
              grad.embeddings_grad(fr, d) =
                  objective.alpha * reg.grad_embeddings(local, d);
            }
          }
          ++local;
        }
      } else {
        for (std::size_t s = 0; s < net_config.num_speakers; ++s) {
          grad.logits_grad(0, s) =
              objective.ce_weight * ce.grad_logits(row_base[idx], s);
        }
        if (need_reg) {
          for (std::size_t d = 0; d < net_config.embed_dim; ++d) {
            grad.embeddings_grad(0, d) =
                objective.alpha * reg.grad_embeddings(row_base[idx], d);
          }
        }
      }
      partials[idx] = net::backward(params, net_config, trace, grad);
    } catch (const std::exception& ex) {
#pragma omp critical
      if (error.empty()) error = ex.what();
    }
  }
  if (!error.empty()) throw InputError(error);

  result.grads = zeros_like(params);
  for (const auto& partial : partials) accumulate(&result.grads, partial);
  if (need_reg) {
    for (std::size_t i = 0; i < result.grads.head.theta.size(); ++i) {
      result.grads.head.theta.data()[i] +=
          objective.alpha * reg.grad_theta.data()[i];
    }
  }
  return result;
}

namespace {

corpus::Corpus diagnostic_subset(const corpus::Corpus& corpus, std::size_t cap) {
  if (cap == 0 || cap >= corpus.utterances.size()) return corpus;
  // Deterministic stratified subset. When the cap cannot cover every speaker
  // with two utterances, restrict to the first cap/2 speakers instead of
  // spreading singletons, so the covariance diagnostics stay well-posed.
  cap = std::max<std::size_t>(cap, 4);
  auto groups = corpus.by_speaker();
  const std::size_t speakers =
      std::min(groups.size(), std::max<std::size_t>(2, cap / 2));
  corpus::Corpus subset;
  subset.num_speakers = corpus.num_speakers;
  subset.feat_dim = corpus.feat_dim;
  std::size_t taken = 0, round = 0;
  bool any = true;
  while (taken < cap && any) {
    any = false;
    for (std::size_t s = 0; s < speakers && taken < cap; ++s) {
      if (round < groups[s].size()) {
        subset.utterances.push_back(corpus.utterances[groups[s][round]]);
        ++taken;
        any = true;
      }
    }
    ++round;
  }
  return subset;
}

struct EpochPlan {
  std::vector<std::vector<BatchEntry>> batches;
};

EpochPlan plan_epoch(const corpus::Corpus& corpus,
                     const net::NetworkConfig& net_config,
                     const TrainConfig& config, Rng* rng) {
  EpochPlan plan;
  if (net_config.mode == net::Mode::kXvector) {
    std::vector<std::size_t> order(corpus.utterances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (config.shuffle) rng->shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<BatchEntry> batch;
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t i = start; i < end; ++i) batch.push_back({order[i], {}});
      plan.batches.push_back(std::move(batch));
    }
  } else {
    // Frame-level batches: every valid (utterance, output frame) pair is a
    // sample; batch_size counts frames.
    const std::size_t context = net_config.total_context();
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
      const std::size_t rows = corpus.utterances[u].frames.rows();
      if (rows < context + 1) {
        throw InputError(msg("train: utterance ", corpus.utterances[u].id,
                             " has ", rows, " frames, need ", context + 1));
      }
      for (std::size_t f = 0; f + context < rows; ++f) pairs.push_back({u, f});
    }
    if (config.shuffle) rng->shuffle(pairs);
    for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + config.batch_size);
      std::vector<std::pair<std::size_t, std::size_t>> chunk(
          pairs.begin() + static_cast<std::ptrdiff_t>(start),
          pairs.begin() + static_cast<std::ptrdiff_t>(end));
      std::sort(chunk.begin(), chunk.end());
      std::vector<BatchEntry> batch;
      for (const auto& [u, f] : chunk) {
        if (batch.empty() || batch.back().utterance != u) {
          batch.push_back({u, {}});
        }
        batch.back().frame_rows.push_back(f);
      }
      plan.batches.push_back(std::move(batch));
    }
  }
  return plan;
}

TrainResult train_loop(const corpus::Corpus& corpus,
                       const net::NetworkConfig& net_config,
                       const loss::LossConfig& loss_config,
                       const TrainConfig& train_config,
                       net::NetworkParams params, OptimizerState opt_state,
                       Rng rng, std::size_t start_epoch) {
  corpus.validate();
  net_config.validate();
  train_config.validate();
  if (corpus.num_speakers != net_config.num_speakers) {
    throw ConfigError(msg("train: corpus has ", corpus.num_speakers,
                          " speakers but the network expects ",
                          net_config.num_speakers));
  }
  if ((net_config.mode == net::Mode::kDvector) !=
      (loss_config.level == loss::Level::kFrame)) {
    throw ConfigError("train: loss level must match the network mode "
                      "(frame <-> dvector)");
  }

  const corpus::Corpus diag = diagnostic_subset(corpus, train_config.diag_max_utts);
  TrainResult result;

  for (std::size_t epoch = start_epoch; epoch < train_config.epochs; ++epoch) {
    const double alpha = alpha_for(loss_config, train_config, epoch);
    ObjectiveSpec objective{1.0, alpha, loss_config.norm_form};
    EpochPlan plan = plan_epoch(corpus, net_config, train_config, &rng);
    for (const auto& batch : plan.batches) {
      BatchGradient bg = batch_gradient(params, net_config, corpus, batch, objective);
      if (!std::isfinite(bg.value)) {
        throw NumericalError(msg("train: objective diverged in epoch ", epoch,
                                 "; last finite epoch ",
                                 epoch == 0 ? std::string("none")
                                            : std::to_string(epoch - 1)));
      }
      optimizer_step(train_config, &params, &bg.grads, &opt_state);
    }
    if (train_config.replace_every > 0 &&
        (epoch + 1) % train_config.replace_every == 0) {
      RealMatrix embeddings = extract_embeddings(params, net_config, corpus);
      std::vector<std::size_t> labels(corpus.utterances.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = corpus.utterances[i].speaker;
      }
      loss::SpeakerMeans means =
          loss::speaker_means(embeddings, labels, corpus.num_speakers);
      params.head = loss::full_info_replace(params.head, means);
    }
    loss::LossConfig diag_loss = loss_config;
    diag_loss.alpha = alpha;
    DiagnosticsRecord record = diagnose(params, net_config, diag_loss, diag);
    record.epoch = epoch;
    result.diagnostics.push_back(record);
  }

  result.checkpoint.net_config = net_config;
  result.checkpoint.loss_config = loss_config;
  result.checkpoint.train_config = train_config;
  result.checkpoint.params = params;
  result.checkpoint.epochs_done = train_config.epochs;
  result.checkpoint.opt_state = std::move(opt_state);
  result.checkpoint.rng_state = rng.save_state();
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train(const corpus::Corpus& corpus, const net::NetworkConfig& net_config,
                  const loss::LossConfig& loss_config,
                  const TrainConfig& train_config) {
  net::NetworkParams params = net::init_params(net_config, train_config.seed);
  params.head.has_bias = loss_config.use_bias;
  Rng rng(Rng::derive_seed(train_config.seed, kShuffleStream));
  return train_loop(corpus, net_config, loss_config, train_config,
                    std::move(params), OptimizerState{}, std::move(rng), 0);
}

TrainResult resume(const Checkpoint& checkpoint, const corpus::Corpus& corpus,
                   std::size_t total_epochs) {
  if (total_epochs < checkpoint.epochs_done) {
    throw ConfigError(msg("resume: checkpoint already covers ",
                          checkpoint.epochs_done, " epochs, requested ",
                          total_epochs));
  }
  TrainConfig config = checkpoint.train_config;
  config.epochs = total_epochs;
  Rng rng(0);
  rng.load_state(checkpoint.rng_state);
  return train_loop(corpus, checkpoint.net_config, checkpoint.loss_config,
                    config, checkpoint.params, checkpoint.opt_state,
                    std::move(rng), checkpoint.epochs_done);
}

double gradient_check(const net::NetworkConfig& net_config,
                      const loss::LossConfig& loss_config, std::uint64_t seed) {
  // A small smooth net: finite differences are meaningless across ReLU kinks.
  net::NetworkConfig cfg;
  cfg.mode = net_config.mode;
  cfg.num_speakers = 3;
  cfg.embed_dim = 7;
  cfg.tdnn_layers = {
      {{-1, 0, 1}, 5, 6, net::Activation::kTanh},
      {{-2, 0, 2}, 6, 6, net::Activation::kTanh},
  };
  if (cfg.mode == net::Mode::kXvector) {
    cfg.pooling = net::Pooling::kMeanStd;
    cfg.post_pool_layers = {{12, 7, net::Activation::kTanh}};
  } else {
    cfg.pooling = net::Pooling::kNone;
    cfg.tdnn_layers.push_back({{-3, 0, 3}, 6, 6, net::Activation::kTanh});
    cfg.post_pool_layers = {{6, 7, net::Activation::kTanh}};
  }

  // A token corpus: five utterances over three speakers.
  Rng rng(Rng::derive_seed(seed, 0x6c));
  corpus::Corpus tiny;
  tiny.num_speakers = 3;
  tiny.feat_dim = 5;
  const std::size_t min_frames = cfg.min_frames();
  for (std::size_t u = 0; u < 5; ++u) {
    corpus::Utterance utt;
    utt.id = msg("g", u);
    utt.speaker = u % 3;
    utt.frames = RealMatrix(min_frames + 2 + u, 5);
    for (std::size_t i = 0; i < utt.frames.size(); ++i) {
      utt.frames.data()[i] = rng.normal();
    }
    tiny.utterances.push_back(std::move(utt));
  }

  std::vector<BatchEntry> batch;
  for (std::size_t u = 0; u < tiny.utterances.size(); ++u) {
    BatchEntry entry{u, {}};
    if (cfg.mode == net::Mode::kDvector) {
      const std::size_t t_out =
          tiny.utterances[u].frames.rows() - cfg.total_context();
      for (std::size_t f = 0; f < t_out; ++f) entry.frame_rows.push_back(f);
    }
    batch.push_back(std::move(entry));
  }

  const double alpha = loss_config.alpha > 0.0 ? loss_config.alpha : 0.05;
  std::vector<ObjectiveSpec> objectives = {
      {1.0, 0.0, loss::NormForm::kSquared},          // plain CE
      {0.0, 1.0, loss::NormForm::kSquared},          // R, squared
      {0.0, 1.0, loss::NormForm::kUnsquared},        // R, unsquared
      {1.0, alpha, loss_config.norm_form},           // CE + alpha R
  };

  net::NetworkParams params = net::init_params(cfg, Rng::derive_seed(seed, 0x1f));
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& objective : objectives) {
    BatchGradient analytic = batch_gradient(params, cfg, tiny, batch, objective);
    auto param_refs = net::tensor_refs(params);
    auto grad_refs = net::tensor_refs(analytic.grads);
    for (std::size_t r = 0; r < param_refs.size(); ++r) {
      for (std::size_t i = 0; i < param_refs[r].size; ++i) {
        const double saved = param_refs[r].data[i];
        param_refs[r].data[i] = saved + h;
        const double up =
            batch_gradient(params, cfg, tiny, batch, objective).value;
        param_refs[r].data[i] = saved - h;
        const double down =
            batch_gradient(params, cfg, tiny, batch, objective).value;
        param_refs[r].data[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = grad_refs[r].data[i];
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-3});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

DiagnosticsRecord diagnose(const net::NetworkParams& params,
                           const net::NetworkConfig& net_config,
                           const loss::LossConfig& loss_config,
                           const corpus::Corpus& subset) {
  if (subset.utterances.empty()) throw InputError("diagnose: empty subset");

  // Objective parts at the training level.
  std::vector<BatchEntry> all;
  for (std::size_t u = 0; u < subset.utterances.size(); ++u) {
    BatchEntry entry{u, {}};
    if (net_config.mode == net::Mode::kDvector) {
      const std::size_t t_out =
          subset.utterances[u].frames.rows() - net_config.total_context();
      for (std::size_t f = 0; f < t_out; ++f) entry.frame_rows.push_back(f);
    }
    all.push_back(std::move(entry));
  }
  ObjectiveSpec objective{1.0, loss_config.alpha, loss_config.norm_form};
  // The regularizer value is wanted even at alpha = 0; use a unit alpha and
  // rescale the objective afterwards.
  ObjectiveSpec measured = objective;
  if (measured.alpha == 0.0) measured.alpha = 1.0;
  BatchGradient bg = batch_gradient(params, net_config, subset, all, measured);

  DiagnosticsRecord record;
  record.ce_part = bg.ce;
  record.r_part = bg.r;
  record.objective = bg.ce + objective.alpha * bg.r;

  // The four statistics run on utterance-level embeddings in both modes.
  RealMatrix embeddings = extract_embeddings(params, net_config, subset);
  std::vector<std::size_t> labels(subset.utterances.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = subset.utterances[i].speaker;
  }
  loss::SpeakerMeans means =
      loss::speaker_means(embeddings, labels, net_config.num_speakers);

  double gap = 0.0;
  std::size_t present = 0;
  for (std::size_t s = 0; s < net_config.num_speakers; ++s) {
    if (!means.present[s]) continue;
    double diff_sq = 0.0, mean_sq = 0.0;
    for (std::size_t d = 0; d < net_config.embed_dim; ++d) {
      const double diff = params.head.theta(s, d) - means.v(s, d);
      diff_sq += diff * diff;
      mean_sq += means.v(s, d) * means.v(s, d);
    }
    gap += std::sqrt(diff_sq) / (std::sqrt(mean_sq) + 1e-12);
    ++present;
  }
  record.theta_to_mean_gap = gap / static_cast<double>(present);

  // Within-class residuals.
  std::vector<std::size_t> counts(net_config.num_speakers, 0);
  for (std::size_t s : labels) ++counts[s];
  std::size_t multi = 0;
  for (std::size_t c : counts) multi += c >= 2 ? 1 : 0;
  if (multi < 2) {
    throw InputError("diagnose: covariance statistics need at least 2 speakers "
                     "with 2 embeddings each");
  }
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  RealMatrix residuals(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      residuals(i, j) = embeddings(i, j) - means.v(labels[i], j);
    }
  }

  RealMatrix cov(d, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = residuals.row(i);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) cov(a, b) += r[a] * r[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n);
      cov(b, a) = cov(a, b);
    }
  }
  numkit::SymEig eig = numkit::sym_eig(cov);
  const double lambda_max = eig.eigenvalues[0];
  const double lambda_min = eig.eigenvalues[d - 1];
  const double floor = std::max(lambda_max, 1.0) * 1e-12;
  record.within_class_isotropy = lambda_max / std::max(lambda_min, floor);

  double skew_sum = 0.0, kurt_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = residuals(i, j);
      m2 += x * x;
      m3 += x * x * x;
      m4 += x * x * x * x;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    if (m2 > 1e-24) {
      skew_sum += std::abs(m3 / std::pow(m2, 1.5));
      kurt_sum += std::abs(m4 / (m2 * m2) - 3.0);
    }
  }
  record.skewness_norm = skew_sum / static_cast<double>(d);
  record.excess_kurtosis_norm = kurt_sum / static_cast<double>(d);
  return record;
}

std::string diagnostics_csv(const std::vector<DiagnosticsRecord>& records) {
  std::string out = "epoch,objective,ce,r,theta_gap,isotropy,skew,kurtosis\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  r.epoch, r.objective, r.ce_part, r.r_part, r.theta_to_mean_gap,
                  r.within_class_isotropy, r.skewness_norm,
                  r.excess_kurtosis_norm);
    out += buf;
  }
  return out;
}

namespace {

const char* optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  Checkpoint& c = const_cast<Checkpoint&>(checkpoint);
  auto refs = net::tensor_refs(c.params);
  corpus::atomic_write(path, [&](std::ostream& os) {
    os << net::serialize_config(checkpoint.net_config) << "\n";
    os << "head_bias=" << (checkpoint.params.head.has_bias ? 1 : 0)
       << " tensors=" << refs.size()
       << " loss.alpha=" << format_double(checkpoint.loss_config.alpha)
       << " loss.norm_form="
       << (checkpoint.loss_config.norm_form == loss::NormForm::kSquared
               ? "squared" : "unsquared")
       << " loss.level="
       << (checkpoint.loss_config.level == loss::Level::kFrame ? "frame"
                                                               : "utterance")
       << " loss.use_bias=" << (checkpoint.loss_config.use_bias ? 1 : 0)
       << " train.optimizer=" << optimizer_name(checkpoint.train_config.optimizer)
       << " train.learning_rate=" << format_double(checkpoint.train_config.learning_rate)
       << " train.momentum=" << format_double(checkpoint.train_config.momentum)
       << " train.beta1=" << format_double(checkpoint.train_config.beta1)
       << " train.beta2=" << format_double(checkpoint.train_config.beta2)
       << " train.adam_epsilon=" << format_double(checkpoint.train_config.adam_epsilon)
       << " train.epochs=" << checkpoint.train_config.epochs
       << " train.batch_size=" << checkpoint.train_config.batch_size
       << " train.seed=" << checkpoint.train_config.seed
       << " train.replace_every=" << checkpoint.train_config.replace_every
       << " train.shuffle=" << (checkpoint.train_config.shuffle ? 1 : 0)
       << " train.diag_max_utts=" << checkpoint.train_config.diag_max_utts
       << " epochs_done=" << checkpoint.epochs_done
       << " opt_step=" << checkpoint.opt_state.step
       << " alpha_schedule=";
    for (std::size_t i = 0; i < checkpoint.train_config.alpha_schedule.size(); ++i) {
      const auto& [epoch, alpha] = checkpoint.train_config.alpha_schedule[i];
      if (i) os << ";";
      os << epoch << ":" << format_double(alpha);
    }
    os << "\n";
    os << "rng " << checkpoint.rng_state << "\n";
    for (const auto& ref : refs) {
      RealMatrix m(ref.rows, ref.cols);
      for (std::size_t i = 0; i < ref.size; ++i) m.data()[i] = ref.data[i];
      corpus::write_matrix(os, m);
    }
    for (const auto* moments : {&checkpoint.opt_state.m, &checkpoint.opt_state.v}) {
      for (std::size_t r = 0; r < refs.size(); ++r) {
        RealMatrix m(1, refs[r].size);
        if (!moments->empty()) {
          for (std::size_t i = 0; i < refs[r].size; ++i) {
            m.data()[i] = (*moments)[r][i];
          }
        }
        corpus::write_matrix(os, m);
      }
    }
  });
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(msg("cannot open ", path, " for reading"));
  std::string config_line, meta_line, rng_line;
  if (!std::getline(is, config_line) || !std::getline(is, meta_line) ||
      !std::getline(is, rng_line)) {
    throw FormatError("checkpoint: missing header", 0);
  }
  Checkpoint checkpoint;
  checkpoint.net_config = net::parse_config(config_line);
  bool head_bias = true;
  std::size_t expected_tensors = 0;
  {
    std::istringstream ms(meta_line);
    std::string token;
    while (ms >> token) {
      auto eq = token.find('=');
      if (eq == std::string::npos) {
        throw FormatError(msg("checkpoint: bad token '", token, "'"), 0);
      }
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "head_bias") {
        head_bias = value == "1";
      } else if (key == "tensors") {
        expected_tensors = std::stoull(value);
      } else if (key == "loss.alpha") {
        checkpoint.loss_config.alpha = std::stod(value);
      } else if (key == "loss.norm_form") {
        checkpoint.loss_config.norm_form = value == "squared"
                                               ? loss::NormForm::kSquared
                                               : loss::NormForm::kUnsquared;
      } else if (key == "loss.level") {
        checkpoint.loss_config.level =
            value == "frame" ? loss::Level::kFrame : loss::Level::kUtterance;
      } else if (key == "loss.use_bias") {
        checkpoint.loss_config.use_bias = value == "1";
      } else if (key == "train.optimizer") {
        checkpoint.train_config.optimizer =
            value == "adam" ? OptimizerKind::kAdam : OptimizerKind::kSgd;
      } else if (key == "train.learning_rate") {
        checkpoint.train_config.learning_rate = std::stod(value);
      } else if (key == "train.momentum") {
        checkpoint.train_config.momentum = std::stod(value);
      } else if (key == "train.beta1") {
        checkpoint.train_config.beta1 = std::stod(value);
      } else if (key == "train.beta2") {
        checkpoint.train_config.beta2 = std::stod(value);
      } else if (key == "train.adam_epsilon") {
        checkpoint.train_config.adam_epsilon = std::stod(value);
      } else if (key == "train.epochs") {
        checkpoint.train_config.epochs = std::stoull(value);
      } else if (key == "train.batch_size") {
        checkpoint.train_config.batch_size = std::stoull(value);
      } else if (key == "train.seed") {
        checkpoint.train_config.seed = std::stoull(value);
      } else if (key == "train.replace_every") {
        checkpoint.train_config.replace_every = std::stoull(value);
      } else if (key == "train.shuffle") {
        checkpoint.train_config.shuffle = value == "1";
      } else if (key == "train.diag_max_utts") {
        checkpoint.train_config.diag_max_utts = std::stoull(value);
      } else if (key == "epochs_done") {
        checkpoint.epochs_done = std::stoull(value);
      } else if (key == "opt_step") {
        checkpoint.opt_state.step = std::stoull(value);
      } else if (key == "alpha_schedule") {
        if (!value.empty()) {
          std::istringstream ss(value);
          std::string item;
          while (std::getline(ss, item, ';')) {
            auto colon = item.find(':');
            if (colon == std::string::npos) {
              throw FormatError("checkpoint: bad alpha_schedule entry", 0);
            }
            checkpoint.train_config.alpha_schedule.push_back(
                {std::stoull(item.substr(0, colon)),
                 std::stod(item.substr(colon + 1))});
          }
        }
      } else {
        throw FormatError(msg("checkpoint: unknown key '", key, "'"), 0);
      }
    }
  }
  if (rng_line.rfind("rng ", 0) != 0) {
    throw FormatError("checkpoint: missing rng state", 0);
  }
  checkpoint.rng_state = rng_line.substr(4);
  checkpoint.params = net::init_params(checkpoint.net_config, 0);
  checkpoint.params.head.has_bias = head_bias;
  auto refs = net::tensor_refs(checkpoint.params);
  if (expected_tensors != refs.size()) {
    throw FormatError(msg("checkpoint: expected ", refs.size(),
                          " tensors, header says ", expected_tensors), 0);
  }
  for (auto& ref : refs) {
    RealMatrix m = corpus::read_matrix(is);
    if (m.size() != ref.size) {
      throw FormatError(msg("checkpoint: tensor ", ref.name, " size mismatch"), 0);
    }
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = m.data()[i];
  }
  checkpoint.opt_state.m.resize(refs.size());
  checkpoint.opt_state.v.resize(refs.size());
  for (auto* moments : {&checkpoint.opt_state.m, &checkpoint.opt_state.v}) {
    for (std::size_t r = 0; r < refs.size(); ++r) {
      RealMatrix m = corpus::read_matrix(is);
      if (m.size() != refs[r].size) {
        throw FormatError("checkpoint: optimizer state size mismatch", 0);
      }
      (*moments)[r].assign(m.data(), m.data() + m.size());
    }
  }
  return checkpoint;
}

}  // namespace train
}  // namespace gembed
