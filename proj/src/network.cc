// src/network.cc

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

#include "gembed/network.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gembed/corpus_io.h"
#include "gembed/error.h"
#include "gembed/rng.h"

namespace gembed {
namespace net {

namespace {

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

// Derivative of the activation, written in terms of the pre-activation and
// the already-computed output (cheap for tanh).
double activate_grad(Activation act, double pre, double post) {
  switch (act) {
    case Activation::kRelu:
      return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh:
      return 1.0 - post * post;
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::kRelu:
      return "relu";
    case Activation::kTanh:
      return "tanh";
    case Activation::kIdentity:
      return "identity";
  }
  return "relu";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError(msg("unknown activation '", name, "'"));
}

// Gathers the input rows at each offset into one row per valid output frame.
RealMatrix build_context(const RealMatrix& input, const std::vector<int>& offsets) {
  const int min_o = offsets.front();
  const int span = offsets.back() - min_o;
  if (input.rows() <= static_cast<std::size_t>(span)) {
    throw InputError(msg("tdnn layer needs at least ", span + 1,
                         " input rows, got ", input.rows()));
  }
  const std::size_t t_out = input.rows() - static_cast<std::size_t>(span);
  const std::size_t in_dim = input.cols();
  RealMatrix ctx(t_out, offsets.size() * in_dim);
  for (std::size_t t = 0; t < t_out; ++t) {
    double* dst = ctx.row(t);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const std::size_t src_row = t + static_cast<std::size_t>(offsets[k] - min_o);
      const double* src = input.row(src_row);
      for (std::size_t d = 0; d < in_dim; ++d) dst[k * in_dim + d] = src[d];
    }
  }
  return ctx;
}

// preact = ctx * W^T + bias, activated rowwise.
void affine_forward(const RealMatrix& ctx, const LayerParams& layer,
                    Activation act, RealMatrix* preact, RealMatrix* output) {
  *preact = numkit::matmul(ctx, numkit::transpose(layer.weight));
  for (std::size_t t = 0; t < preact->rows(); ++t) {
    double* p = preact->row(t);
    for (std::size_t u = 0; u < preact->cols(); ++u) p[u] += layer.bias[u];
  }
  *output = RealMatrix(preact->rows(), preact->cols());
  for (std::size_t t = 0; t < preact->rows(); ++t) {
    const double* p = preact->row(t);
    double* o = output->row(t);
    for (std::size_t u = 0; u < preact->cols(); ++u) o[u] = activate(act, p[u]);
  }
}

// Backward through activation + affine. Returns d objective / d ctx and
// accumulates weight/bias gradients.
RealMatrix affine_backward(const RealMatrix& ctx, const LayerParams& layer,
                           Activation act, const RealMatrix& preact,
                           const RealMatrix& output, const RealMatrix& d_output,
                           LayerParams* grad) {
  RealMatrix d_pre(d_output.rows(), d_output.cols());
  for (std::size_t t = 0; t < d_output.rows(); ++t) {
    const double* g = d_output.row(t);
    const double* p = preact.row(t);
    const double* o = output.row(t);
    double* dp = d_pre.row(t);
    for (std::size_t u = 0; u < d_output.cols(); ++u) {
      dp[u] = g[u] * activate_grad(act, p[u], o[u]);
    }
  }
  RealMatrix dw = numkit::matmul(numkit::transpose(d_pre), ctx);
  for (std::size_t i = 0; i < dw.size(); ++i) grad->weight.data()[i] += dw.data()[i];
  for (std::size_t t = 0; t < d_pre.rows(); ++t) {
    const double* dp = d_pre.row(t);
    for (std::size_t u = 0; u < d_pre.cols(); ++u) grad->bias[u] += dp[u];
  }
  return numkit::matmul(d_pre, layer.weight);
}

// Scatters context-row gradients back onto input rows.
RealMatrix scatter_context(const RealMatrix& d_ctx, const std::vector<int>& offsets,
                           std::size_t t_in, std::size_t in_dim) {
  const int min_o = offsets.front();
  RealMatrix d_input(t_in, in_dim);
  for (std::size_t t = 0; t < d_ctx.rows(); ++t) {
    const double* src = d_ctx.row(t);
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      const std::size_t dst_row = t + static_cast<std::size_t>(offsets[k] - min_o);
      double* dst = d_input.row(dst_row);
      for (std::size_t d = 0; d < in_dim; ++d) dst[d] += src[k * in_dim + d];
    }
  }
  return d_input;
}

void glorot_fill(RealMatrix* weight, std::size_t fan_in, std::size_t fan_out,
                 Rng* rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < weight->size(); ++i) {
    weight->data()[i] = rng->uniform(-limit, limit);
  }
}

}  // namespace

std::size_t NetworkConfig::feat_dim() const {
  if (tdnn_layers.empty()) throw ConfigError("network: no frame-level layers");
  return tdnn_layers.front().in_dim;
}

std::size_t NetworkConfig::frame_dim() const {
  if (tdnn_layers.empty()) throw ConfigError("network: no frame-level layers");
  return tdnn_layers.back().out_dim;
}

std::size_t NetworkConfig::total_context() const {
  std::size_t context = 0;
  for (const auto& layer : tdnn_layers) {
    context += static_cast<std::size_t>(layer.offsets.back() - layer.offsets.front());
  }
  return context;
}

void NetworkConfig::validate() const {
  if (num_speakers == 0) throw ConfigError("network: num_speakers must be positive");
  if (tdnn_layers.empty()) throw ConfigError("network: no frame-level layers");
  if (post_pool_layers.empty()) {
    throw ConfigError("network: at least one post-pool layer required");
  }
  for (std::size_t l = 0; l < tdnn_layers.size(); ++l) {
    const auto& layer = tdnn_layers[l];
    if (layer.offsets.empty()) {
      throw ConfigError(msg("network: tdnn layer ", l, " has no offsets"));
    }
    for (std::size_t k = 1; k < layer.offsets.size(); ++k) {
      if (layer.offsets[k] <= layer.offsets[k - 1]) {
        throw ConfigError(msg("network: tdnn layer ", l,
                              " offsets must strictly increase"));
      }
    }
    if (layer.in_dim == 0 || layer.out_dim == 0) {
      throw ConfigError(msg("network: tdnn layer ", l, " has a zero dimension"));
    }
    if (l > 0 && layer.in_dim != tdnn_layers[l - 1].out_dim) {
      throw ConfigError(msg("network: tdnn layer ", l, " in_dim ", layer.in_dim,
                            " does not chain from ", tdnn_layers[l - 1].out_dim));
    }
  }
  if (mode == Mode::kXvector && pooling != Pooling::kMeanStd) {
    throw ConfigError("network: xvector mode requires mean_std pooling");
  }
  if (mode == Mode::kDvector && pooling != Pooling::kNone) {
    throw ConfigError("network: dvector mode requires pooling=none");
  }
  const std::size_t post_in =
      pooling == Pooling::kMeanStd ? 2 * frame_dim() : frame_dim();
  for (std::size_t l = 0; l < post_pool_layers.size(); ++l) {
    const auto& layer = post_pool_layers[l];
    const std::size_t expect =
        l == 0 ? post_in : post_pool_layers[l - 1].out_dim;
    if (layer.in_dim != expect) {
      throw ConfigError(msg("network: post-pool layer ", l, " in_dim ",
                            layer.in_dim, " does not chain from ", expect));
    }
    if (layer.out_dim == 0) {
      throw ConfigError(msg("network: post-pool layer ", l, " has out_dim 0"));
    }
  }
  if (post_pool_layers.back().out_dim != embed_dim) {
    throw ConfigError(msg("network: last post-pool layer out_dim ",
                          post_pool_layers.back().out_dim,
                          " must equal embed_dim ", embed_dim));
  }
  if (!(pool_epsilon > 0.0)) {
    throw ConfigError("network: pool_epsilon must be positive");
  }
}

NetworkConfig NetworkConfig::paper_profile(Mode mode, std::size_t feat_dim,
                                           std::size_t num_speakers) {
  NetworkConfig c;
  c.mode = mode;
  c.embed_dim = 512;
  c.num_speakers = num_speakers;
  const std::size_t h = 512;
  c.tdnn_layers = {
      {{-2, -1, 0, 1, 2}, feat_dim, h, Activation::kRelu},
      {{-2, 0, 2}, h, h, Activation::kRelu},
      {{-3, 0, 3}, h, h, Activation::kRelu},
      {{0}, h, h, Activation::kRelu},
      {{0}, h, h, Activation::kRelu},
  };
  if (mode == Mode::kXvector) {
    c.pooling = Pooling::kMeanStd;
    c.post_pool_layers = {{2 * h, c.embed_dim, Activation::kRelu}};
  } else {
    c.pooling = Pooling::kNone;
    // The pooling slot is taken by one more time-delay layer.
    c.tdnn_layers.push_back({{-3, 0, 3}, h, h, Activation::kRelu});
    c.post_pool_layers = {{h, c.embed_dim, Activation::kRelu}};
  }
  return c;
}

NetworkConfig NetworkConfig::desk_profile(Mode mode, std::size_t feat_dim,
                                          std::size_t num_speakers,
                                          std::size_t hidden_dim,
                                          std::size_t embed_dim) {
  NetworkConfig c;
  c.mode = mode;
  c.embed_dim = embed_dim;
  c.num_speakers = num_speakers;
  c.tdnn_layers = {
      {{-1, 0, 1}, feat_dim, hidden_dim, Activation::kRelu},
      {{-2, 0, 2}, hidden_dim, hidden_dim, Activation::kRelu},
  };
  // The embedding layer reads through tanh rather than a rectifier: bounded
  // activations keep the within-class covariance full rank, and the
  // saturation is what the Gaussian constraint straightens out.
  if (mode == Mode::kXvector) {
    c.pooling = Pooling::kMeanStd;
    c.post_pool_layers = {{2 * hidden_dim, embed_dim, Activation::kTanh}};
  } else {
    c.pooling = Pooling::kNone;
    c.tdnn_layers.push_back({{-3, 0, 3}, hidden_dim, hidden_dim, Activation::kRelu});
    c.post_pool_layers = {{hidden_dim, embed_dim, Activation::kTanh}};
  }
  return c;
}

std::vector<TensorRef> tensor_refs(NetworkParams& params) {
  std::vector<TensorRef> refs;
  auto add_matrix = [&](const std::string& name, RealMatrix& m) {
    refs.push_back({name, m.data(), m.size(), m.rows(), m.cols()});
  };
  auto add_vector = [&](const std::string& name, RealVector& v) {
    refs.push_back({name, v.data(), v.dim(), 1, v.dim()});
  };
  for (std::size_t l = 0; l < params.tdnn.size(); ++l) {
    add_matrix(msg("tdnn", l, ".weight"), params.tdnn[l].weight);
    add_vector(msg("tdnn", l, ".bias"), params.tdnn[l].bias);
  }
  for (std::size_t l = 0; l < params.post_pool.size(); ++l) {
    add_matrix(msg("post", l, ".weight"), params.post_pool[l].weight);
    add_vector(msg("post", l, ".bias"), params.post_pool[l].bias);
  }
  add_matrix("head.theta", params.head.theta);
  add_vector("head.bias", params.head.bias);
  return refs;
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  NetworkParams params;
  for (const auto& spec : config.tdnn_layers) {
    LayerParams layer;
    const std::size_t fan_in = spec.offsets.size() * spec.in_dim;
    layer.weight = RealMatrix(spec.out_dim, fan_in);
    layer.bias = RealVector(spec.out_dim);
    glorot_fill(&layer.weight, fan_in, spec.out_dim, &rng);
    params.tdnn.push_back(std::move(layer));
  }
  for (const auto& spec : config.post_pool_layers) {
    LayerParams layer;
    layer.weight = RealMatrix(spec.out_dim, spec.in_dim);
    layer.bias = RealVector(spec.out_dim);
    glorot_fill(&layer.weight, spec.in_dim, spec.out_dim, &rng);
    params.post_pool.push_back(std::move(layer));
  }
  params.head.theta = RealMatrix(config.num_speakers, config.embed_dim);
  params.head.bias = RealVector(config.num_speakers);
  glorot_fill(&params.head.theta, config.embed_dim, config.num_speakers, &rng);
  return params;
}

RealMatrix forward_frames(const NetworkParams& params, const NetworkConfig& config,
                          const RealMatrix& frames, ForwardTrace* trace) {
  if (frames.cols() != config.feat_dim()) {
    throw InputError(msg("forward_frames: frames have dim ", frames.cols(),
                         ", network expects ", config.feat_dim()));
  }
  if (frames.rows() < config.min_frames()) {
    throw InputError(msg("forward_frames: utterance has ", frames.rows(),
                         " frames, the network needs at least ",
                         config.min_frames()));
  }
  if (trace) {
    trace->input_frames = frames;
    trace->tdnn_preact.clear();
    trace->tdnn_output.clear();
  }
  RealMatrix current = frames;
  for (std::size_t l = 0; l < config.tdnn_layers.size(); ++l) {
    const auto& spec = config.tdnn_layers[l];
    RealMatrix ctx = build_context(current, spec.offsets);
    RealMatrix preact, output;
    affine_forward(ctx, params.tdnn[l], spec.activation, &preact, &output);
    if (trace) {
      trace->tdnn_preact.push_back(preact);
      trace->tdnn_output.push_back(output);
    }
    current = std::move(output);
  }
  return current;
}

namespace {

// Shared by forward_utterance and extract_embedding. `with_logits` skips the
// classifier matmul when only the embedding is needed.
void forward_impl(const NetworkParams& params, const NetworkConfig& config,
                  const RealMatrix& frames, bool with_logits,
                  UtteranceForward* out) {
  RealMatrix frame_feats = forward_frames(params, config, frames, &out->trace);
  RealMatrix post_input;
  if (config.pooling == Pooling::kMeanStd) {
    numkit::MeanStd stats = numkit::rowwise_mean_std(frame_feats, config.pool_epsilon);
    out->trace.pool_mean = stats.mean;
    out->trace.pool_std = stats.std;
    post_input = RealMatrix(1, 2 * frame_feats.cols());
    for (std::size_t d = 0; d < frame_feats.cols(); ++d) {
      post_input(0, d) = stats.mean[d];
      post_input(0, frame_feats.cols() + d) = stats.std[d];
    }
  } else {
    post_input = std::move(frame_feats);
  }
  out->trace.post_preact.clear();
  out->trace.post_output.clear();
  RealMatrix current = std::move(post_input);
  for (std::size_t l = 0; l < config.post_pool_layers.size(); ++l) {
    const auto& spec = config.post_pool_layers[l];
    RealMatrix preact, output;
    affine_forward(current, params.post_pool[l], spec.activation, &preact, &output);
    out->trace.post_preact.push_back(preact);
    out->trace.post_output.push_back(output);
    current = std::move(output);
  }
  out->trace.embeddings = current;

  if (config.mode == Mode::kXvector) {
    out->embedding = out->trace.embeddings.row_copy(0);
  } else {
    // Average pooling of the per-frame features.
    out->embedding = RealVector(config.embed_dim);
    const std::size_t t_out = out->trace.embeddings.rows();
    for (std::size_t t = 0; t < t_out; ++t) {
      const double* row = out->trace.embeddings.row(t);
      for (std::size_t d = 0; d < config.embed_dim; ++d) out->embedding[d] += row[d];
    }
    for (std::size_t d = 0; d < config.embed_dim; ++d) {
      out->embedding[d] /= static_cast<double>(t_out);
    }
  }

  if (with_logits) {
    out->logits = numkit::matmul(out->trace.embeddings,
                                 numkit::transpose(params.head.theta));
    if (params.head.has_bias) {
      for (std::size_t t = 0; t < out->logits.rows(); ++t) {
        double* row = out->logits.row(t);
        for (std::size_t s = 0; s < out->logits.cols(); ++s) {
          row[s] += params.head.bias[s];
        }
      }
    }
    out->trace.logits = out->logits;
  }
}

}  // namespace

UtteranceForward forward_utterance(const NetworkParams& params,
                                   const NetworkConfig& config,
                                   const RealMatrix& frames) {
  UtteranceForward out;
  forward_impl(params, config, frames, /*with_logits=*/true, &out);
  return out;
}

RealVector extract_embedding(const NetworkParams& params,
                             const NetworkConfig& config,
                             const RealMatrix& frames) {
  UtteranceForward out;
  forward_impl(params, config, frames, /*with_logits=*/false, &out);
  return out.embedding;
}

NetworkParams backward(const NetworkParams& params, const NetworkConfig& config,
                       const ForwardTrace& trace, const OutputGrad& grad) {
  if (grad.logits_grad.rows() != trace.logits.rows() ||
      grad.logits_grad.cols() != trace.logits.cols()) {
    throw InputError("backward: logits gradient shape does not match trace");
  }
  if (grad.embeddings_grad.rows() != trace.embeddings.rows() ||
      grad.embeddings_grad.cols() != trace.embeddings.cols()) {
    throw InputError("backward: embeddings gradient shape does not match trace");
  }

  NetworkParams grads;
  grads.tdnn.resize(params.tdnn.size());
  for (std::size_t l = 0; l < params.tdnn.size(); ++l) {
    grads.tdnn[l].weight = RealMatrix(params.tdnn[l].weight.rows(),
                                      params.tdnn[l].weight.cols());
    grads.tdnn[l].bias = RealVector(params.tdnn[l].bias.dim());
  }
  grads.post_pool.resize(params.post_pool.size());
  for (std::size_t l = 0; l < params.post_pool.size(); ++l) {
    grads.post_pool[l].weight = RealMatrix(params.post_pool[l].weight.rows(),
                                           params.post_pool[l].weight.cols());
    grads.post_pool[l].bias = RealVector(params.post_pool[l].bias.dim());
  }
  grads.head.theta = RealMatrix(params.head.theta.rows(), params.head.theta.cols());
  grads.head.bias = RealVector(params.head.bias.dim());
  grads.head.has_bias = params.head.has_bias;

  // Classifier head.
  grads.head.theta = numkit::matmul(numkit::transpose(grad.logits_grad),
                                    trace.embeddings);
  if (params.head.has_bias) {
    for (std::size_t t = 0; t < grad.logits_grad.rows(); ++t) {
      const double* g = grad.logits_grad.row(t);
      for (std::size_t s = 0; s < grad.logits_grad.cols(); ++s) {
        grads.head.bias[s] += g[s];
      }
    }
  }
  RealMatrix d_current = numkit::matmul(grad.logits_grad, params.head.theta);
  for (std::size_t i = 0; i < d_current.size(); ++i) {
    d_current.data()[i] += grad.embeddings_grad.data()[i];
  }

  // Post-pool stack, last layer first.
  const std::size_t frame_dim = config.frame_dim();
  RealMatrix pooled_input;
  if (config.pooling == Pooling::kMeanStd) {
    pooled_input = RealMatrix(1, 2 * frame_dim);
    for (std::size_t d = 0; d < frame_dim; ++d) {
      pooled_input(0, d) = trace.pool_mean[d];
      pooled_input(0, frame_dim + d) = trace.pool_std[d];
    }
  }
  for (std::size_t l = params.post_pool.size(); l-- > 0;) {
    const RealMatrix& input =
        l == 0 ? (config.pooling == Pooling::kMeanStd ? pooled_input
                                                      : trace.tdnn_output.back())
               : trace.post_output[l - 1];
    d_current = affine_backward(input, params.post_pool[l],
                                config.post_pool_layers[l].activation,
                                trace.post_preact[l], trace.post_output[l],
                                d_current, &grads.post_pool[l]);
  }

  // Pooling.
  RealMatrix d_frames;
  if (config.pooling == Pooling::kMeanStd) {
    const RealMatrix& feats = trace.tdnn_output.back();
    const std::size_t t_out = feats.rows();
    const double inv_t = 1.0 / static_cast<double>(t_out);
    d_frames = RealMatrix(t_out, frame_dim);
    for (std::size_t t = 0; t < t_out; ++t) {
      const double* x = feats.row(t);
      double* d = d_frames.row(t);
      for (std::size_t j = 0; j < frame_dim; ++j) {
        const double d_mean = d_current(0, j);
        const double d_std = d_current(0, frame_dim + j);
        // std = sqrt(var + eps): d std / d x_t = (x_t - mean) / (T * std).
        d[j] = d_mean * inv_t +
               d_std * (x[j] - trace.pool_mean[j]) * inv_t / trace.pool_std[j];
      }
    }
  } else {
    d_frames = std::move(d_current);
  }

  // Frame-level stack.
  for (std::size_t l = params.tdnn.size(); l-- > 0;) {
    const RealMatrix& input = l == 0 ? trace.input_frames : trace.tdnn_output[l - 1];
    RealMatrix ctx = build_context(input, config.tdnn_layers[l].offsets);
    RealMatrix d_ctx = affine_backward(ctx, params.tdnn[l],
                                       config.tdnn_layers[l].activation,
                                       trace.tdnn_preact[l], trace.tdnn_output[l],
                                       d_frames, &grads.tdnn[l]);
    d_frames = scatter_context(d_ctx, config.tdnn_layers[l].offsets,
                               input.rows(), input.cols());
  }
  return grads;
}

std::string serialize_config(const NetworkConfig& config) {
  std::ostringstream os;
  os << "mode=" << (config.mode == Mode::kXvector ? "xvector" : "dvector");
  os << " pooling=" << (config.pooling == Pooling::kMeanStd ? "mean_std" : "none");
  os << " embed_dim=" << config.embed_dim;
  os << " num_speakers=" << config.num_speakers;
  char eps[32];
  std::snprintf(eps, sizeof(eps), "%.17g", config.pool_epsilon);
  os << " pool_epsilon=" << eps;
  os << " tdnn=";
  for (std::size_t l = 0; l < config.tdnn_layers.size(); ++l) {
    const auto& layer = config.tdnn_layers[l];
    if (l) os << ";";
    for (std::size_t k = 0; k < layer.offsets.size(); ++k) {
      if (k) os << ",";
      os << layer.offsets[k];
    }
    os << "|" << layer.in_dim << "|" << layer.out_dim << "|"
       << activation_name(layer.activation);
  }
  os << " post=";
  for (std::size_t l = 0; l < config.post_pool_layers.size(); ++l) {
    const auto& layer = config.post_pool_layers[l];
    if (l) os << ";";
    os << layer.in_dim << "|" << layer.out_dim << "|"
       << activation_name(layer.activation);
  }
  return os.str();
}

namespace {

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string current;
  for (char c : text) {
    if (c == sep) {
      parts.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  parts.push_back(current);
  return parts;
}

}  // namespace

NetworkConfig parse_config(const std::string& line) {
  NetworkConfig config;
  config.tdnn_layers.clear();
  config.post_pool_layers.clear();
  std::istringstream is(line);
  std::string token;
  while (is >> token) {
    auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw FormatError(msg("model header: bad token '", token, "'"), 0);
    }
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "mode") {
      if (value == "xvector") {
        config.mode = Mode::kXvector;
      } else if (value == "dvector") {
        config.mode = Mode::kDvector;
      } else {
        throw FormatError(msg("model header: bad mode '", value, "'"), 0);
      }
    } else if (key == "pooling") {
      config.pooling = value == "mean_std" ? Pooling::kMeanStd : Pooling::kNone;
    } else if (key == "embed_dim") {
      config.embed_dim = std::stoull(value);
    } else if (key == "num_speakers") {
      config.num_speakers = std::stoull(value);
    } else if (key == "pool_epsilon") {
      config.pool_epsilon = std::stod(value);
    } else if (key == "tdnn") {
      for (const std::string& spec : split_on(value, ';')) {
        auto fields = split_on(spec, '|');
        if (fields.size() != 4) {
          throw FormatError(msg("model header: bad tdnn spec '", spec, "'"), 0);
        }
        TdnnLayerSpec layer;
        for (const std::string& o : split_on(fields[0], ',')) {
          layer.offsets.push_back(std::stoi(o));
        }
        layer.in_dim = std::stoull(fields[1]);
        layer.out_dim = std::stoull(fields[2]);
        layer.activation = parse_activation(fields[3]);
        config.tdnn_layers.push_back(std::move(layer));
      }
    } else if (key == "post") {
      for (const std::string& spec : split_on(value, ';')) {
        auto fields = split_on(spec, '|');
        if (fields.size() != 3) {
          throw FormatError(msg("model header: bad post spec '", spec, "'"), 0);
        }
        AffineLayerSpec layer;
        layer.in_dim = std::stoull(fields[0]);
        layer.out_dim = std::stoull(fields[1]);
        layer.activation = parse_activation(fields[2]);
        config.post_pool_layers.push_back(layer);
      }
    } else {
      throw FormatError(msg("model header: unknown key '", key, "'"), 0);
    }
  }
  config.validate();
  return config;
}

void save_model(const std::string& path, const NetworkConfig& config,
                const NetworkParams& params) {
  // tensor_refs needs mutable access; serialization does not modify.
  NetworkParams& mutable_params = const_cast<NetworkParams&>(params);
  auto refs = tensor_refs(mutable_params);
  corpus::atomic_write(path, [&](std::ostream& os) {
    os << serialize_config(config) << " head_bias="
       << (params.head.has_bias ? 1 : 0) << " tensors=" << refs.size() << "\n";
    for (const auto& ref : refs) {
      RealMatrix m(ref.rows, ref.cols);
      for (std::size_t i = 0; i < ref.size; ++i) m.data()[i] = ref.data[i];
      corpus::write_matrix(os, m);
    }
  });
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(msg("cannot open ", path, " for reading"));
  std::string header;
  if (!std::getline(is, header)) {
    throw FormatError("model file: missing header", 0);
  }
  // Split the trailer keys off the network configuration.
  bool head_bias = true;
  std::size_t expected_tensors = 0;
  std::string config_line;
  {
    std::istringstream ms(header);
    std::string token;
    while (ms >> token) {
      auto eq = token.find('=');
      const std::string key = eq == std::string::npos ? "" : token.substr(0, eq);
      if (key == "head_bias") {
        head_bias = token.substr(eq + 1) == "1";
      } else if (key == "tensors") {
        expected_tensors = std::stoull(token.substr(eq + 1));
      } else {
        if (!config_line.empty()) config_line += " ";
        config_line += token;
      }
    }
  }
  Model model;
  model.config = parse_config(config_line);
  model.params = init_params(model.config, 0);
  model.params.head.has_bias = head_bias;
  auto refs = tensor_refs(model.params);
  if (expected_tensors != refs.size()) {
    throw FormatError(msg("model file: expected ", refs.size(),
                          " tensors, header says ", expected_tensors), 0);
  }
  for (auto& ref : refs) {
    RealMatrix m = corpus::read_matrix(is);
    if (m.size() != ref.size) {
      throw FormatError(msg("model file: tensor ", ref.name, " has ", m.size(),
                            " values, expected ", ref.size), 0);
    }
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = m.data()[i];
  }
  return model;
}

}  // namespace net
}  // namespace gembed
