// tests/loss_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gembed/error.h"
#include "gembed/loss.h"
#include "gembed/rng.h"

using namespace gembed;
using namespace gembed::loss;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, Rng* rng) {
  RealMatrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng->normal();
  return m;
}

ClassifierHead random_head(std::size_t speakers, std::size_t dim, Rng* rng) {
  ClassifierHead head;
  head.theta = random_matrix(speakers, dim, rng);
  head.bias = RealVector(speakers);
  return head;
}

}  // namespace

TEST_CASE("speaker_means with one embedding per speaker returns the embeddings") {
  RealMatrix embeddings(3, 2);
  embeddings(0, 0) = 1; embeddings(1, 1) = 2; embeddings(2, 0) = -3;
  SpeakerMeans means = speaker_means(embeddings, {0, 1, 2}, 3);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(means.present[s]);
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(means.v(s, d) == embeddings(s, d));
    }
  }
}

TEST_CASE("speaker_means averages the two-point hand case") {
  RealMatrix embeddings(2, 2);
  embeddings(0, 0) = 1; embeddings(0, 1) = 0;
  embeddings(1, 0) = 3; embeddings(1, 1) = 0;
  SpeakerMeans means = speaker_means(embeddings, {0, 0}, 1);
  CHECK(means.v(0, 0) == 2.0);
  CHECK(means.v(0, 1) == 0.0);
}

TEST_CASE("speaker_means matches a grouped-sum oracle on 30 embeddings") {
  Rng rng(3);
  RealMatrix embeddings = random_matrix(30, 4, &rng);
  std::vector<std::size_t> labels(30);
  for (std::size_t i = 0; i < 30; ++i) labels[i] = rng.uniform_index(5);
  labels[0] = 0; labels[1] = 1; labels[2] = 2; labels[3] = 3; labels[4] = 4;
  SpeakerMeans means = speaker_means(embeddings, labels, 5);
  for (std::size_t s = 0; s < 5; ++s) {
    RealVector sum(4);
    std::size_t count = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      if (labels[i] != s) continue;
      ++count;
      for (std::size_t d = 0; d < 4; ++d) sum[d] += embeddings(i, d);
    }
    REQUIRE(count > 0);
    for (std::size_t d = 0; d < 4; ++d) {
      CHECK(std::abs(means.v(s, d) - sum[d] / count) < 1e-12);
    }
  }
}

TEST_CASE("speaker_means flags absent speakers instead of zero-filling") {
  RealMatrix embeddings(2, 2, 1.0);
  SpeakerMeans means = speaker_means(embeddings, {0, 2}, 4);
  CHECK(means.present[0]);
  CHECK(!means.present[1]);
  CHECK(means.present[2]);
  CHECK(!means.present[3]);
  CHECK_THROWS_AS(speaker_means(RealMatrix(0, 2), {}, 3), InputError);
}

TEST_CASE("scaling a speaker's embeddings scales its mean linearly") {
  Rng rng(9);
  RealMatrix embeddings = random_matrix(6, 3, &rng);
  std::vector<std::size_t> labels = {0, 0, 0, 1, 1, 1};
  SpeakerMeans base = speaker_means(embeddings, labels, 2);
  const double c = 3.25;
  RealMatrix scaled = embeddings;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t d = 0; d < 3; ++d) scaled(i, d) *= c;
  }
  SpeakerMeans after = speaker_means(scaled, labels, 2);
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(after.v(0, d) == doctest::Approx(c * base.v(0, d)).epsilon(1e-15));
    CHECK(after.v(1, d) == base.v(1, d));
  }
}

TEST_CASE("nonparam_probs is uniform when all means coincide") {
  SpeakerMeans means;
  means.v = RealMatrix(4, 3, 0.7);
  means.present.assign(4, 1);
  RealVector f(3);
  f[0] = 1; f[1] = -2; f[2] = 0.5;
  RealVector p = nonparam_probs(f, means);
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(p[s] == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("nonparam_probs is uniform when the embedding is orthogonal to every mean") {
  SpeakerMeans means;
  means.v = RealMatrix(3, 2);
  means.v(0, 1) = 1; means.v(1, 1) = 2; means.v(2, 1) = -5;
  means.present.assign(3, 1);
  RealVector f(2);
  f[0] = 4;  // second coordinate zero
  RealVector p = nonparam_probs(f, means);
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(p[s] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("nonparam_probs matches the direct two-speaker evaluation") {
  SpeakerMeans means;
  means.v = RealMatrix(2, 2);
  means.v(0, 0) = 2;  // v0 = (2, 0)
  means.v(1, 1) = 2;  // v1 = (0, 2)
  means.present.assign(2, 1);
  RealVector f(2);
  f[0] = 1;
  RealVector p = nonparam_probs(f, means);
  const double expect = std::exp(2.0) / (std::exp(2.0) + 1.0);
  CHECK(p[0] == doctest::Approx(expect).epsilon(1e-9));
  CHECK(p[0] == doctest::Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("cross entropy of uniform logits is log S") {
  RealMatrix logits(4, 5);
  auto result = cross_entropy(logits, {0, 1, 2, 3});
  CHECK(result.value == doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("cross entropy vanishes under a +1000 margin on the true class") {
  RealMatrix logits(1, 3);
  logits(0, 1) = 1000.0;
  auto result = cross_entropy(logits, {1});
  CHECK(result.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy matches a log-sum-exp oracle on random logits") {
  Rng rng(21);
  RealMatrix logits = random_matrix(4, 3, &rng);
  std::vector<std::size_t> labels = {2, 0, 1, 1};
  auto result = cross_entropy(logits, labels);
  double expect = 0.0;
  for (std::size_t t = 0; t < 4; ++t) {
    double mx = logits(t, 0);
    for (std::size_t s = 1; s < 3; ++s) mx = std::max(mx, logits(t, s));
    double sum = 0.0;
    for (std::size_t s = 0; s < 3; ++s) sum += std::exp(logits(t, s) - mx);
    expect += (mx + std::log(sum)) - logits(t, labels[t]);
  }
  expect /= 4.0;
  CHECK(std::abs(result.value - expect) < 1e-12);
  // Gradient rows sum to zero: softmax minus one-hot.
  for (std::size_t t = 0; t < 4; ++t) {
    double sum = 0.0;
    for (std::size_t s = 0; s < 3; ++s) sum += result.grad_logits(t, s);
    CHECK(std::abs(sum) < 1e-15);
  }
}

TEST_CASE("cross entropy rejects out-of-range labels") {
  RealMatrix logits(2, 3);
  CHECK_THROWS_AS(cross_entropy(logits, {0, 3}), InputError);
  CHECK_THROWS_AS(cross_entropy(logits, {0}), InputError);
}

TEST_CASE("regularizer is zero exactly at its minimum") {
  Rng rng(4);
  ClassifierHead head = random_head(3, 4, &rng);
  RealMatrix embeddings(5, 4);
  std::vector<std::size_t> labels = {0, 1, 2, 0, 1};
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t d = 0; d < 4; ++d) {
      embeddings(t, d) = head.theta(labels[t], d);
    }
  }
  for (NormForm form : {NormForm::kSquared, NormForm::kUnsquared}) {
    LossConfig config;
    config.norm_form = form;
    auto result = gauss_regularizer(embeddings, labels, head, config);
    CHECK(result.value == 0.0);
    for (std::size_t i = 0; i < result.grad_embeddings.size(); ++i) {
      CHECK(result.grad_embeddings.data()[i] == 0.0);
    }
    for (std::size_t i = 0; i < result.grad_theta.size(); ++i) {
      CHECK(result.grad_theta.data()[i] == 0.0);
    }
  }
}

TEST_CASE("regularizer 3-4-5 case: unsquared 5, squared 25") {
  ClassifierHead head;
  head.theta = RealMatrix(1, 2);
  head.bias = RealVector(1);
  RealMatrix embeddings(1, 2);
  embeddings(0, 0) = 3;
  embeddings(0, 1) = 4;
  LossConfig config;
  config.norm_form = NormForm::kSquared;
  CHECK(std::abs(gauss_regularizer(embeddings, {0}, head, config).value - 25.0)
        < 1e-12);
  config.norm_form = NormForm::kUnsquared;
  CHECK(std::abs(gauss_regularizer(embeddings, {0}, head, config).value - 5.0)
        < 1e-12);
}

TEST_CASE("squared regularizer matches an elementwise-sum oracle and finite differences") {
  Rng rng(6);
  ClassifierHead head = random_head(3, 4, &rng);
  RealMatrix embeddings = random_matrix(6, 4, &rng);
  std::vector<std::size_t> labels = {0, 1, 2, 2, 1, 0};
  LossConfig config;
  config.norm_form = NormForm::kSquared;
  auto result = gauss_regularizer(embeddings, labels, head, config);

  double expect = 0.0;
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t d = 0; d < 4; ++d) {
      const double diff = embeddings(t, d) - head.theta(labels[t], d);
      expect += diff * diff;
    }
  }
  expect /= 6.0;
  CHECK(std::abs(result.value - expect) < 1e-12);

  const double h = 1e-6;
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t d = 0; d < 4; ++d) {
      RealMatrix up = embeddings, down = embeddings;
      up(t, d) += h;
      down(t, d) -= h;
      const double numeric =
          (gauss_regularizer(up, labels, head, config).value -
           gauss_regularizer(down, labels, head, config).value) / (2 * h);
      CHECK(std::abs(numeric - result.grad_embeddings(t, d)) < 1e-6);
    }
  }
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t d = 0; d < 4; ++d) {
      ClassifierHead up = head, down = head;
      up.theta(s, d) += h;
      down.theta(s, d) -= h;
      const double numeric =
          (gauss_regularizer(embeddings, labels, up, config).value -
           gauss_regularizer(embeddings, labels, down, config).value) / (2 * h);
      CHECK(std::abs(numeric - result.grad_theta(s, d)) < 1e-6);
    }
  }
}

TEST_CASE("unsquared regularizer guards the kink with a zero gradient") {
  ClassifierHead head;
  head.theta = RealMatrix(1, 2, 0.5);
  head.bias = RealVector(1);
  RealMatrix embeddings(1, 2, 0.5);
  embeddings(0, 0) += 1e-13;  // within the 1e-12 guard
  LossConfig config;
  config.norm_form = NormForm::kUnsquared;
  auto result = gauss_regularizer(embeddings, {0}, head, config);
  CHECK(result.grad_embeddings(0, 0) == 0.0);
  CHECK(result.grad_theta(0, 0) == 0.0);
}

TEST_CASE("regularizer is non-negative with equality only at theta") {
  Rng rng(8);
  ClassifierHead head = random_head(4, 3, &rng);
  for (int trial = 0; trial < 20; ++trial) {
    RealMatrix embeddings = random_matrix(5, 3, &rng);
    std::vector<std::size_t> labels(5);
    for (auto& l : labels) l = rng.uniform_index(4);
    for (NormForm form : {NormForm::kSquared, NormForm::kUnsquared}) {
      LossConfig config;
      config.norm_form = form;
      auto result = gauss_regularizer(embeddings, labels, head, config);
      CHECK(result.value >= 0.0);
      CHECK(result.value > 0.0);  // random embeddings never hit theta exactly
    }
  }
}

TEST_CASE("combined objective at alpha 0 equals plain cross entropy bit-exactly") {
  Rng rng(10);
  ClassifierHead head = random_head(3, 4, &rng);
  RealMatrix embeddings = random_matrix(5, 4, &rng);
  RealMatrix logits = random_matrix(5, 3, &rng);
  std::vector<std::size_t> labels = {0, 1, 2, 1, 0};
  LossConfig config;
  config.alpha = 0.0;
  auto combined = combined_objective(logits, embeddings, labels, head, config);
  auto ce = cross_entropy(logits, labels);
  CHECK(combined.value == ce.value);
  CHECK(combined.grad_logits == ce.grad_logits);
  for (std::size_t i = 0; i < combined.grad_embeddings.size(); ++i) {
    CHECK(combined.grad_embeddings.data()[i] == 0.0);
  }
  for (std::size_t i = 0; i < combined.grad_theta.size(); ++i) {
    CHECK(combined.grad_theta.data()[i] == 0.0);
  }
}

TEST_CASE("combined objective gradients are CE plus alpha times R, coordinatewise") {
  Rng rng(12);
  ClassifierHead head = random_head(3, 4, &rng);
  RealMatrix embeddings = random_matrix(5, 4, &rng);
  RealMatrix logits = random_matrix(5, 3, &rng);
  std::vector<std::size_t> labels = {0, 1, 2, 1, 0};
  LossConfig config;
  config.alpha = 0.05;
  auto combined = combined_objective(logits, embeddings, labels, head, config);
  auto ce = cross_entropy(logits, labels);
  auto reg = gauss_regularizer(embeddings, labels, head, config);
  CHECK(std::abs(combined.value - (ce.value + 0.05 * reg.value)) < 1e-14);
  for (std::size_t i = 0; i < combined.grad_logits.size(); ++i) {
    CHECK(std::abs(combined.grad_logits.data()[i] - ce.grad_logits.data()[i])
          < 1e-14);
  }
  for (std::size_t i = 0; i < combined.grad_embeddings.size(); ++i) {
    CHECK(std::abs(combined.grad_embeddings.data()[i] -
                   0.05 * reg.grad_embeddings.data()[i]) < 1e-14);
  }
  for (std::size_t i = 0; i < combined.grad_theta.size(); ++i) {
    CHECK(std::abs(combined.grad_theta.data()[i] -
                   0.05 * reg.grad_theta.data()[i]) < 1e-14);
  }
}

TEST_CASE("full_info_replace copies the means and zeroes the bias") {
  Rng rng(14);
  ClassifierHead head = random_head(3, 4, &rng);
  head.bias[0] = 5.0;
  RealMatrix embeddings = random_matrix(9, 4, &rng);
  std::vector<std::size_t> labels = {0, 1, 2, 0, 1, 2, 0, 1, 2};
  SpeakerMeans means = speaker_means(embeddings, labels, 3);
  ClassifierHead updated = full_info_replace(head, means);
  CHECK(updated.theta == means.v);
  for (std::size_t s = 0; s < 3; ++s) CHECK(updated.bias[s] == 0.0);
  // Idempotent.
  ClassifierHead again = full_info_replace(updated, means);
  CHECK(again.theta == updated.theta);
  CHECK(again.bias == updated.bias);
}

TEST_CASE("after replacement logits reproduce the non-parametric classifier") {
  Rng rng(16);
  RealMatrix embeddings = random_matrix(12, 4, &rng);
  std::vector<std::size_t> labels(12);
  for (std::size_t i = 0; i < 12; ++i) labels[i] = i % 3;
  SpeakerMeans means = speaker_means(embeddings, labels, 3);
  ClassifierHead head = random_head(3, 4, &rng);
  ClassifierHead replaced = full_info_replace(head, means);
  for (int trial = 0; trial < 50; ++trial) {
    RealVector f(4);
    for (std::size_t d = 0; d < 4; ++d) f[d] = rng.normal();
    // Logits through the replaced head.
    RealVector logits = numkit::matvec(replaced.theta, f);
    RealVector probs_direct = nonparam_probs(f, means);
    // Same softmax input implies the same distribution.
    RealMatrix one(1, 3);
    for (std::size_t s = 0; s < 3; ++s) one(0, s) = logits[s];
    RealMatrix probs_head = numkit::softmax_rows(one);
    std::size_t argmax_head = 0, argmax_direct = 0;
    for (std::size_t s = 1; s < 3; ++s) {
      if (probs_head(0, s) > probs_head(0, argmax_head)) argmax_head = s;
      if (probs_direct[s] > probs_direct[argmax_direct]) argmax_direct = s;
    }
    CHECK(argmax_head == argmax_direct);
    for (std::size_t s = 0; s < 3; ++s) {
      CHECK(std::abs(probs_head(0, s) - probs_direct[s]) < 1e-12);
    }
  }
}

TEST_CASE("full_info_replace lists the missing speakers") {
  Rng rng(18);
  ClassifierHead head = random_head(4, 3, &rng);
  RealMatrix embeddings = random_matrix(2, 3, &rng);
  SpeakerMeans means = speaker_means(embeddings, {0, 2}, 4);
  try {
    full_info_replace(head, means);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    std::string what = e.what();
    CHECK(what.find("1") != std::string::npos);
    CHECK(what.find("3") != std::string::npos);
  }
}

TEST_CASE("frame-level reduction: one frame per utterance equals utterance level") {
  Rng rng(20);
  ClassifierHead head = random_head(3, 4, &rng);
  RealMatrix features = random_matrix(6, 4, &rng);
  std::vector<std::size_t> labels = {0, 1, 2, 2, 1, 0};
  LossConfig utterance_cfg;
  utterance_cfg.level = Level::kUtterance;
  LossConfig frame_cfg;
  frame_cfg.level = Level::kFrame;
  auto a = gauss_regularizer(features, labels, head, utterance_cfg);
  auto b = gauss_regularizer(features, labels, head, frame_cfg);
  CHECK(a.value == b.value);
  CHECK(a.grad_embeddings == b.grad_embeddings);
  CHECK(a.grad_theta == b.grad_theta);
}
