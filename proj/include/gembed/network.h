// gembed/network.h

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

#ifndef GEMBED_NETWORK_H_
#define GEMBED_NETWORK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "gembed/loss.h"
#include "gembed/matrix.h"

namespace gembed {
namespace net {

enum class Activation { kRelu, kTanh, kIdentity };

enum class Mode { kXvector, kDvector };

enum class Pooling { kMeanStd, kNone };

/// One time-delay layer: the output at frame t is an affine function of the
/// input rows at t + offset for each offset, concatenated in offset order,
/// followed by the activation. Offsets are strictly increasing and the valid
/// output range shrinks by (max offset - min offset) rows.
struct TdnnLayerSpec {
  std::vector<int> offsets;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::kRelu;
};

/// One dense layer applied per row.
struct AffineLayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::kRelu;
};

/// The embedding network. In xvector mode the frame stack feeds a mean/std
/// pooling layer and the post-pool stack maps the pooled statistics to the
/// embedding (the activation of the last post-pool layer, the penultimate
/// layer of the whole net). In dvector mode there is no pooling: the frame
/// stack ends in a time-delay layer with offsets {-3, 0, +3} where pooling
/// would sit, the post-pool stack is applied per frame, and the utterance
/// embedding is the average of the per-frame embeddings.
struct NetworkConfig {
  Mode mode = Mode::kXvector;
  std::vector<TdnnLayerSpec> tdnn_layers;
  Pooling pooling = Pooling::kMeanStd;
  std::vector<AffineLayerSpec> post_pool_layers;
  std::size_t embed_dim = 512;
  std::size_t num_speakers = 0;
  double pool_epsilon = 1e-10;

  std::size_t feat_dim() const;
  std::size_t frame_dim() const;  // output dim of the frame-level stack
  /// Sum over layers of (max offset - min offset): the number of frames lost
  /// to temporal context across the stack.
  std::size_t total_context() const;
  std::size_t min_frames() const { return total_context() + 1; }

  void validate() const;

  /// Full-scale configurations: five time-delay layers sliced
  /// {t-2..t+2}, {t-2,t,t+2}, {t-3,t,t+3}, {t}, {t}, hidden width 512 and a
  /// 512-dimensional embedding. The dvector variant swaps the pooling layer
  /// for a {t-3,t,t+3} time-delay layer.
  static NetworkConfig paper_profile(Mode mode, std::size_t feat_dim = 24,
                                     std::size_t num_speakers = 7185);

  /// Small configuration for laptop-scale experiments: two time-delay layers
  /// and configurable hidden/embedding widths.
  static NetworkConfig desk_profile(Mode mode, std::size_t feat_dim,
                                    std::size_t num_speakers,
                                    std::size_t hidden_dim = 64,
                                    std::size_t embed_dim = 64);
};

struct LayerParams {
  RealMatrix weight;  // out_dim x (|offsets| * in_dim), or out_dim x in_dim
  RealVector bias;    // out_dim
};

/// All trainable state: the frame stack, the post-pool stack and the
/// classifier head appended for training.
struct NetworkParams {
  std::vector<LayerParams> tdnn;
  std::vector<LayerParams> post_pool;
  loss::ClassifierHead head;
};

/// Flat view over every trainable tensor, in a fixed order. The optimizer,
/// the finite-difference harness and the checkpoint writer all iterate this
/// order, which keeps updates and files deterministic.
struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
  std::size_t rows;  // for serialization; biases are 1 x size
  std::size_t cols;
};
std::vector<TensorRef> tensor_refs(NetworkParams& params);

/// Cached activations from one forward pass, consumed by backward().
struct ForwardTrace {
  RealMatrix input_frames;
  std::vector<RealMatrix> tdnn_preact;
  std::vector<RealMatrix> tdnn_output;
  RealVector pool_mean, pool_std;  // xvector only
  std::vector<RealMatrix> post_preact;
  std::vector<RealMatrix> post_output;
  RealMatrix embeddings;  // rows x embed_dim; 1 row in xvector mode
  RealMatrix logits;      // rows x num_speakers
};

/// Glorot-uniform weights, zero biases; deterministic given the seed.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

/// Runs the frame-level stack. Output has
/// frames.rows() - total_context() rows. When `trace` is non-null the
/// per-layer activations are recorded for backward().
RealMatrix forward_frames(const NetworkParams& params,
                          const NetworkConfig& config, const RealMatrix& frames,
                          ForwardTrace* trace = nullptr);

struct UtteranceForward {
  RealVector embedding;  // the utterance-level speaker vector
  RealMatrix logits;     // 1 x S (xvector) or frames x S (dvector)
  ForwardTrace trace;
};

UtteranceForward forward_utterance(const NetworkParams& params,
                                   const NetworkConfig& config,
                                   const RealMatrix& frames);

/// Gradients of a scalar objective with respect to the network outputs:
/// d objective / d logits plus any direct dependence on the embeddings (the
/// Gaussian constraint contributes through that path). Shapes must match the
/// trace.
struct OutputGrad {
  RealMatrix logits_grad;
  RealMatrix embeddings_grad;
};

/// Reverse-mode gradients for every weight and bias, including the classifier
/// head, returned in a NetworkParams-shaped container.
NetworkParams backward(const NetworkParams& params, const NetworkConfig& config,
                       const ForwardTrace& trace, const OutputGrad& grad);

/// The embedding read at inference time: penultimate-layer activation in
/// xvector mode, average of the per-frame features in dvector mode.
RealVector extract_embedding(const NetworkParams& params,
                             const NetworkConfig& config,
                             const RealMatrix& frames);

/// Model checkpoint file: a UTF-8 header line with the configuration as
/// key=value pairs, then one GEMX matrix section per parameter tensor in
/// tensor_refs order.
void save_model(const std::string& path, const NetworkConfig& config,
                const NetworkParams& params);
struct Model {
  NetworkConfig config;
  NetworkParams params;
};
Model load_model(const std::string& path);

std::string serialize_config(const NetworkConfig& config);
NetworkConfig parse_config(const std::string& line);

}  // namespace net
}  // namespace gembed

#endif  // GEMBED_NETWORK_H_
