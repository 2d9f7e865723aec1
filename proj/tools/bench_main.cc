// tools/bench_main.cc

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

// Compares the OpenMP kernels against their serial reference
// implementations. Worker count follows GEMBED_THREADS.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "gembed/backend.h"
#include "gembed/matrix.h"
#include "gembed/reference.h"
#include "gembed/rng.h"
#include "gembed/threads.h"
#include "gembed/trainer.h"

namespace {

using namespace gembed;

double time_ms(const std::function<void()>& fn, int reps) {
  // One warmup, then the best of `reps`.
  fn();
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0)
                              .count());
  }
  return best;
}

void row(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-26s %10.2f ms %12.2f ms %8.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 256;
  const int reps = argc > 2 ? std::stoi(argv[2]) : 3;
  std::printf("workers: %d\n", worker_count());
  std::printf("%-26s %13s %15s %9s\n", "kernel", "serial", "parallel", "speedup");

  Rng rng(1);
  RealMatrix a(n, n), b(n, n);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  RealMatrix checksum;
  double serial = time_ms([&] { checksum = reference::matmul(a, b); }, reps);
  double parallel = time_ms([&] { checksum = numkit::matmul(a, b); }, reps);
  row("matmul", serial, parallel);

  // Batch embedding extraction: a serial loop against the parallel helper.
  corpus::SynthSpec spec;
  spec.num_speakers = 8;
  spec.utts_per_speaker = 16;
  spec.frames_min = 60;
  spec.frames_max = 120;
  spec.feat_dim = 24;
  spec.seed = 3;
  corpus::Corpus data = corpus::generate(spec);
  net::NetworkConfig config =
      net::NetworkConfig::desk_profile(net::Mode::kXvector, 24, 8, 64, 64);
  net::NetworkParams params = net::init_params(config, 1);
  serial = time_ms(
      [&] {
        for (const auto& u : data.utterances) {
          RealVector e = net::extract_embedding(params, config, u.frames);
          checksum(0, 0) += e[0];
        }
      },
      reps);
  parallel = time_ms(
      [&] { checksum(0, 0) += train::extract_embeddings(params, config, data)(0, 0); },
      reps);
  row("embedding extraction", serial, parallel);

  // Trial scoring.
  corpus::EmbeddingArchive archive;
  archive.vectors = train::extract_embeddings(params, config, data);
  std::vector<std::size_t> labels;
  for (const auto& u : data.utterances) {
    archive.ids.push_back(u.id);
    labels.push_back(u.speaker);
  }
  backend::BackendOptions options;
  options.lda_dim = 7;
  backend::BackendModel model =
      backend::fit_backend(archive.vectors, labels, options);
  auto trials = corpus::make_trials(data, 400, 4000, 9);
  serial = time_ms(
      [&] {
        for (const auto& t : trials) {
          std::size_t e = 0, s = 0;
          for (std::size_t i = 0; i < archive.ids.size(); ++i) {
            if (archive.ids[i] == t.enroll_id) e = i;
            if (archive.ids[i] == t.test_id) s = i;
          }
          RealVector ve = backend::lda_apply(model.lda, archive.vectors.row_copy(e));
          RealVector vs = backend::lda_apply(model.lda, archive.vectors.row_copy(s));
          checksum(0, 0) += backend::plda_score(model.plda, ve, vs);
        }
      },
      reps);
  parallel = time_ms(
      [&] { checksum(0, 0) += backend::score_trials(model, archive, trials)[0].score; },
      reps);
  row("trial scoring", serial, parallel);

  std::printf("(checksum %g)\n", checksum(0, 0));
  return 0;
}
