// tests/cli_test.cc

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

// Drives the actual gembed binary (via GEMBED_BIN) through its subcommands.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gembed/corpus_io.h"
#include "gembed/error.h"
#include "gembed/metrics.h"
#include "gembed/network.h"
#include "gembed/rng.h"
#include "gembed/runconfig.h"
#include "gembed/trainer.h"

using namespace gembed;
namespace fs = std::filesystem;

namespace {

std::string binary() {
  const char* bin = std::getenv("GEMBED_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "GEMBED_BIN must point at the gembed binary");
  return bin;
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("gembed_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args) {
  const std::string cmd = binary() + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string run_capture(const std::string& args, int* exit_code = nullptr) {
  const std::string out_path =
      (fs::temp_directory_path() / "gembed_cli_capture.txt").string();
  const std::string cmd = binary() + " " + args + " > " + out_path + " 2>&1";
  int status = std::system(cmd.c_str());
  if (exit_code) *exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(out_path);
  std::stringstream ss;
  ss << is.rdbuf();
  fs::remove(out_path);
  return ss.str();
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kSmallSynth =
    " -s synth.num_speakers=6 -s synth.utts_per_speaker=8"
    " -s synth.frames_min=16 -s synth.frames_max=24 -s synth.feat_dim=8"
    " -s synth.test_num_speakers=5 -s synth.test_utts_per_speaker=6"
    " -s trials.num_target=40 -s trials.num_nontarget=150";

const char* kSmallNet = " -s net.hidden_dim=16 -s net.embed_dim=12";

}  // namespace

TEST_CASE("synth writes parseable corpora and re-runs byte-identically") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  CHECK(fs::exists(box.path("data/train.gemx")));
  CHECK(fs::exists(box.path("data/train.utts")));
  CHECK(fs::exists(box.path("data/test.gemx")));
  CHECK(fs::exists(box.path("data/trials.txt")));

  corpus::Corpus train_corpus = corpus::load_corpus(box.path("data/train"));
  CHECK(train_corpus.num_speakers == 6);
  CHECK(train_corpus.utterances.size() == 48);
  auto trials = corpus::load_trials(box.path("data/trials.txt"));
  CHECK(trials.size() == 190);

  // Trial labels agree with the sidecar speaker map.
  auto labels = corpus::load_labels(box.path("data/test.utts"));
  for (const auto& t : trials) {
    CHECK((labels.at(t.enroll_id) == labels.at(t.test_id)) == t.is_target);
  }

  REQUIRE(run("synth --out " + box.path("data2") + kSmallSynth) == 0);
  CHECK(read_file(box.path("data/train.gemx")) ==
        read_file(box.path("data2/train.gemx")));
  CHECK(read_file(box.path("data/test.gemx")) ==
        read_file(box.path("data2/test.gemx")));
  CHECK(read_file(box.path("data/trials.txt")) ==
        read_file(box.path("data2/trials.txt")));
}

TEST_CASE("train writes a model and a diagnostics CSV with one row per epoch") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model.gemb") + " --diagnostics " + box.path("diag.csv") +
              " --epochs 3 --alpha 0.05" + kSmallNet) == 0);
  CHECK(fs::exists(box.path("model.gemb")));
  std::string csv = read_file(box.path("diag.csv"));
  CHECK(csv.rfind("epoch,objective,ce,r,theta_gap,isotropy,skew,kurtosis\n", 0) == 0);
  std::size_t rows = 0;
  for (char c : csv) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 4);  // header + 3 epochs

  // The alpha = 0 baseline trains too.
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model0.gemb") + " --epochs 1 --alpha 0" + kSmallNet) == 0);
  net::Model model = net::load_model(box.path("model.gemb"));
  CHECK(model.config.num_speakers == 6);
}

TEST_CASE("extract produces one deterministic row per utterance") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model.gemb") + " --epochs 2" + kSmallNet) == 0);
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/test") + " --out " + box.path("emb.gemx")) == 0);
  corpus::EmbeddingArchive archive = corpus::load_embeddings(box.path("emb.gemx"));
  corpus::Corpus test_corpus = corpus::load_corpus(box.path("data/test"));
  CHECK(archive.vectors.rows() == test_corpus.utterances.size());
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/test") + " --out " + box.path("emb2.gemx")) == 0);
  CHECK(read_file(box.path("emb.gemx")) == read_file(box.path("emb2.gemx")));
}

TEST_CASE("dvector extraction equals an independent average of frame features") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --mode dvector"
              " --out " + box.path("model.gemb") + " --epochs 1 --alpha 0.01" +
              kSmallNet + " -s train.batch_size=64") == 0);
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/test") + " --out " + box.path("emb.gemx")) == 0);
  corpus::EmbeddingArchive archive = corpus::load_embeddings(box.path("emb.gemx"));
  net::Model model = net::load_model(box.path("model.gemb"));
  corpus::Corpus test_corpus = corpus::load_corpus(box.path("data/test"));
  // Recompute through forward_frames + post stack per frame, averaged.
  for (std::size_t u = 0; u < 3; ++u) {
    net::UtteranceForward fw = net::forward_utterance(
        model.params, model.config, test_corpus.utterances[u].frames);
    RealVector mean(model.config.embed_dim);
    for (std::size_t t = 0; t < fw.trace.embeddings.rows(); ++t) {
      for (std::size_t d = 0; d < mean.dim(); ++d) {
        mean[d] += fw.trace.embeddings(t, d);
      }
    }
    for (std::size_t d = 0; d < mean.dim(); ++d) {
      mean[d] /= static_cast<double>(fw.trace.embeddings.rows());
      CHECK(std::abs(mean[d] - archive.vectors(u, d)) < 1e-12);
    }
  }
}

TEST_CASE("fit-backend, score, and eval chain for both backends") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model.gemb") + " --epochs 3 --alpha 0.05" + kSmallNet) == 0);
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/train") + " --out " + box.path("train_emb.gemx")) == 0);
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/test") + " --out " + box.path("test_emb.gemx")) == 0);

  for (const std::string kind : {"plda", "cosine"}) {
    REQUIRE(run("fit-backend --embeddings " + box.path("train_emb.gemx") +
                " --labels " + box.path("data/train.utts") + " --backend " + kind +
                " --lda-dim 4 --out " + box.path(kind + ".gemb")) == 0);
    REQUIRE(run("score --backend " + box.path(kind + ".gemb") + " --embeddings " +
                box.path("test_emb.gemx") + " --trials " + box.path("data/trials.txt") +
                " --out " + box.path(kind + "_scores.txt")) == 0);
    auto scores = corpus::load_scores(box.path(kind + "_scores.txt"));
    CHECK(scores.size() == 190);
    int code = 0;
    std::string out = run_capture("eval --scores " + box.path(kind + "_scores.txt") +
                                  " --trials " + box.path("data/trials.txt") +
                                  " --label " + kind, &code);
    CHECK(code == 0);
    CHECK(out.find("DCF(10^-2)") != std::string::npos);
    CHECK(out.find("EER(%)") != std::string::npos);
  }
}

TEST_CASE("perfect archive embeddings drive the EER to zero") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  corpus::Corpus test_corpus = corpus::load_corpus(box.path("data/test"));
  // Hand-build embeddings equal to distinct per-speaker codewords.
  corpus::EmbeddingArchive archive;
  archive.vectors = RealMatrix(test_corpus.utterances.size(), 5);
  for (std::size_t i = 0; i < test_corpus.utterances.size(); ++i) {
    archive.ids.push_back(test_corpus.utterances[i].id);
    archive.vectors(i, test_corpus.utterances[i].speaker % 5) = 1.0;
    archive.vectors(i, 4) += 0.1 * static_cast<double>(test_corpus.utterances[i].speaker);
  }
  corpus::save_embeddings(box.path("perfect.gemx"), archive);
  REQUIRE(run("fit-backend --embeddings " + box.path("perfect.gemx") +
              " --labels " + box.path("data/test.utts") + " --backend cosine"
              " --lda-dim 0 --out " + box.path("cos.gemb")) == 0);
  REQUIRE(run("score --backend " + box.path("cos.gemb") + " --embeddings " +
              box.path("perfect.gemx") + " --trials " + box.path("data/trials.txt") +
              " --out " + box.path("scores.txt")) == 0);
  int code = 0;
  std::string out = run_capture("eval --scores " + box.path("scores.txt") +
                                " --trials " + box.path("data/trials.txt"), &code);
  CHECK(code == 0);
  CHECK(out.find("0.000\n") != std::string::npos);  // EER column
}

TEST_CASE("eval matches frozen brute-force oracle values on a 200-trial fixture") {
  Sandbox box;
  // Deterministic fixture: 50 target + 150 nontarget scores.
  Rng rng(424242);
  eval::ScoreSet scores;
  std::vector<eval::Trial> trials;
  for (std::size_t i = 0; i < 200; ++i) {
    eval::Trial t;
    t.enroll_id = "e" + std::to_string(i);
    t.test_id = "t" + std::to_string(i);
    t.is_target = i < 50;
    const double score = t.is_target ? rng.normal() + 1.2 : rng.normal();
    trials.push_back(t);
    scores.push_back({t, score});
  }
  corpus::save_trials(box.path("trials.txt"), trials);
  corpus::save_scores(box.path("scores.txt"), scores);
  int code = 0;
  std::string out = run_capture("eval --scores " + box.path("scores.txt") +
                                " --trials " + box.path("trials.txt") +
                                " --label fixture --csv " + box.path("report.csv"),
                                &code);
  REQUIRE(code == 0);
  // Frozen values computed with the exhaustive threshold-sweep oracle over
  // the 6-decimal score file (metrics_test carries the oracle itself).
  std::string csv = read_file(box.path("report.csv"));
  CHECK(csv.find("fixture,0.860000,0.860000,26.000000,0.26000000,50,150") !=
        std::string::npos);
}

TEST_CASE("RunConfig applies typed keys and rejects malformed values") {
  cli::RunConfig config;
  config.apply("loss.alpha", "0.25");
  CHECK(config.resolved_alpha() == 0.25);
  config.apply("net.mode", "dvector");
  CHECK(config.mode == net::Mode::kDvector);
  CHECK(config.loss_config().level == loss::Level::kFrame);
  config.apply("train.alpha_schedule", "5:0.05;10:0.1");
  REQUIRE(config.train.alpha_schedule.size() == 2);
  CHECK(config.train.alpha_schedule[1].first == 10);
  CHECK(config.train.alpha_schedule[1].second == 0.1);
  config.apply("backend.length_norm", "true");
  CHECK(config.length_norm);
  CHECK_THROWS_AS(config.apply("loss.alpha", "fast"), ConfigError);
  CHECK_THROWS_AS(config.apply("train.epochs", "-3"), ConfigError);
  CHECK_THROWS_AS(config.apply("net.mode", "yvector"), ConfigError);
  CHECK_THROWS_AS(config.apply("made.up", "1"), ConfigError);
  // The default alpha follows the mode.
  cli::RunConfig fresh;
  CHECK(fresh.resolved_alpha() == 0.05);
  fresh.apply("net.mode", "dvector");
  CHECK(fresh.resolved_alpha() == 0.01);
  // Every documented key round-trips through apply().
  std::istringstream keys(cli::RunConfig::documented_keys());
  std::string line;
  std::size_t count = 0;
  while (std::getline(keys, line)) {
    ++count;
    CHECK(line.find("  # ") != std::string::npos);
  }
  CHECK(count >= 30);
}

TEST_CASE("unknown config keys are rejected with exit code 2") {
  Sandbox box;
  std::ofstream(box.path("bad.cfg")) << "no.such.key = 1\n";
  CHECK(run("synth --out " + box.path("d") + " --config " + box.path("bad.cfg")) == 2);
  CHECK(run("synth --out " + box.path("d") + " -s nope=3") == 2);
  // And bad values in known keys.
  std::ofstream(box.path("bad2.cfg")) << "train.epochs = banana\n";
  CHECK(run("synth --out " + box.path("d") + " --config " + box.path("bad2.cfg")) == 2);
}

TEST_CASE("config file values apply and command-line flags override them") {
  Sandbox box;
  std::ofstream(box.path("run.cfg"))
      << "# toolkit smoke config\n"
      << "synth.num_speakers = 4\n"
      << "synth.utts_per_speaker = 6\n"
      << "synth.frames_min = 16\n"
      << "synth.frames_max = 20\n"
      << "synth.feat_dim = 6\n"
      << "synth.test_num_speakers = 4\n"
      << "synth.test_utts_per_speaker = 5\n"
      << "trials.num_target = 20\n"
      << "trials.num_nontarget = 50\n"
      << "net.hidden_dim = 12\n"
      << "net.embed_dim = 8\n"
      << "train.epochs = 1\n";
  REQUIRE(run("synth --out " + box.path("data") + " --config " + box.path("run.cfg")) == 0);
  corpus::Corpus c = corpus::load_corpus(box.path("data/train"));
  CHECK(c.num_speakers == 4);
  // Flag overrides the file's epoch count: diagnostics gets 2 rows, not 1.
  REQUIRE(run("train --corpus " + box.path("data/train") + " --config " +
              box.path("run.cfg") + " --epochs 2 --out " + box.path("m.gemb") +
              " --diagnostics " + box.path("d.csv")) == 0);
  std::string csv = read_file(box.path("d.csv"));
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n' ? 1 : 0;
  CHECK(rows == 3);
}

TEST_CASE("missing inputs exit 2 and leave no partial outputs behind") {
  Sandbox box;
  CHECK(run("train --corpus " + box.path("nope") + " --out " + box.path("m.gemb")) == 2);
  CHECK(!fs::exists(box.path("m.gemb")));
  CHECK(run("score --backend " + box.path("nope.gemb") + " --embeddings " +
            box.path("nope.gemx") + " --trials " + box.path("nope.txt") +
            " --out " + box.path("scores.txt")) == 2);
  CHECK(!fs::exists(box.path("scores.txt")));
  CHECK(!fs::exists(box.path("scores.txt.tmp")));
}

TEST_CASE("scoring an archive with unknown trial ids names the offender") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model.gemb") + " --epochs 1" + kSmallNet) == 0);
  REQUIRE(run("extract --model " + box.path("model.gemb") + " --corpus " +
              box.path("data/train") + " --out " + box.path("emb.gemx")) == 0);
  REQUIRE(run("fit-backend --embeddings " + box.path("emb.gemx") + " --labels " +
              box.path("data/train.utts") + " --lda-dim 3 --out " +
              box.path("b.gemb")) == 0);
  // Trials reference test-corpus ids that are not in the train archive.
  int code = run("score --backend " + box.path("b.gemb") + " --embeddings " +
                 box.path("emb.gemx") + " --trials " + box.path("data/trials.txt") +
                 " --out " + box.path("s.txt"));
  CHECK(code == 2);
}

TEST_CASE("paper profile trains shape-compatibly and extracts 512-dim vectors") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  // Zero epochs: initialization plus checkpoint only; full-scale dimensions.
  REQUIRE(run("train --corpus " + box.path("data/train") + " --profile paper"
              " --epochs 0 --out " + box.path("paper.gemb")) == 0);
  net::Model model = net::load_model(box.path("paper.gemb"));
  CHECK(model.config.embed_dim == 512);
  CHECK(model.config.tdnn_layers.size() == 5);
  REQUIRE(run("extract --model " + box.path("paper.gemb") + " --corpus " +
              box.path("data/test") + " --out " + box.path("p.gemx")) == 0);
  corpus::EmbeddingArchive archive = corpus::load_embeddings(box.path("p.gemx"));
  CHECK(archive.vectors.cols() == 512);
}

TEST_CASE("outputs are byte-identical across worker counts") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  // Oversubscribe the single core: determinism must not depend on threads.
  REQUIRE(std::system(("OMP_NUM_THREADS=4 " + binary() + " train --corpus " +
                       box.path("data/train") + " --out " + box.path("m4.gemb") +
                       " --epochs 2 --alpha 0.05" + kSmallNet + " > /dev/null 2>&1")
                          .c_str()) == 0);
  REQUIRE(std::system(("OMP_NUM_THREADS=1 GEMBED_THREADS=1 " + binary() +
                       " train --corpus " + box.path("data/train") + " --out " +
                       box.path("m1.gemb") + " --epochs 2 --alpha 0.05" + kSmallNet +
                       " > /dev/null 2>&1")
                          .c_str()) == 0);
  CHECK(read_file(box.path("m4.gemb")) == read_file(box.path("m1.gemb")));
  REQUIRE(std::system(("OMP_NUM_THREADS=4 " + binary() + " extract --model " +
                       box.path("m4.gemb") + " --corpus " + box.path("data/test") +
                       " --out " + box.path("e4.gemx") + " > /dev/null 2>&1")
                          .c_str()) == 0);
  REQUIRE(std::system(("OMP_NUM_THREADS=1 " + binary() + " extract --model " +
                       box.path("m4.gemb") + " --corpus " + box.path("data/test") +
                       " --out " + box.path("e1.gemx") + " > /dev/null 2>&1")
                          .c_str()) == 0);
  CHECK(read_file(box.path("e4.gemx")) == read_file(box.path("e1.gemx")));
}

TEST_CASE("gradcheck subcommand passes its own tolerance") {
  CHECK(run("gradcheck --mode both --seed 3") == 0);
  // An absurd tolerance must fail with the numerical exit code.
  CHECK(run("gradcheck --mode xvector --tolerance 1e-12") == 3);
}

TEST_CASE("diagnose prints the four statistics for a trained model") {
  Sandbox box;
  REQUIRE(run("synth --out " + box.path("data") + kSmallSynth) == 0);
  REQUIRE(run("train --corpus " + box.path("data/train") + " --out " +
              box.path("model.gemb") + " --epochs 2 --alpha 0.05" + kSmallNet) == 0);
  int code = 0;
  std::string out = run_capture("diagnose --model " + box.path("model.gemb") +
                                " --corpus " + box.path("data/train") + " --csv " +
                                box.path("diag.csv"), &code);
  CHECK(code == 0);
  CHECK(out.find("theta_gap") != std::string::npos);
  CHECK(out.find("isotropy") != std::string::npos);
  CHECK(read_file(box.path("diag.csv")).rfind("epoch,objective", 0) == 0);
}
