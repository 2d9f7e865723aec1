// gembed/rng.h

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

#ifndef GEMBED_RNG_H_
#define GEMBED_RNG_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gembed {

/// Deterministic, serializable random source.
///
/// All sampling in the toolkit goes through this class; nothing uses global
/// randomness. std::mt19937_64 has a fully specified output sequence, and the
/// floating-point conversions below avoid the implementation-defined
/// std::*_distribution classes, so a seed produces identical streams on every
/// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Consumes exactly two engine draws per
  /// call; no cached spare, so the engine state alone captures the stream.
  double normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Unbiased uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Fisher-Yates shuffle, deterministic given the stream position.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::uint64_t i = items.size() - 1; i > 0; --i) {
      std::uint64_t j = uniform_index(i + 1);
      std::swap(items[i], items[j]);
    }
  }

  /// Engine state as text, for checkpoints. Round trips exactly.
  std::string save_state() const;
  void load_state(const std::string& state);

  /// Derives an independent stream seed from a base seed and a stream tag.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 engine_;
};

}  // namespace gembed

#endif  // GEMBED_RNG_H_
