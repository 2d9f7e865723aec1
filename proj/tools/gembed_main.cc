// tools/gembed_main.cc

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

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

#include "gembed/backend.h"
#include "gembed/corpus.h"
#include "gembed/corpus_io.h"
#include "gembed/error.h"
#include "gembed/metrics.h"
#include "gembed/network.h"
#include "gembed/runconfig.h"
#include "gembed/trainer.h"

namespace {

using namespace gembed;

constexpr int kExitOk = 0;
constexpr int kExitUser = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;  // -s key=value overrides
};

void add_common(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--config", flags->config_path,
                  "key = value configuration file");
  cmd->add_option("--set,-s", flags->sets,
                  "override a config key, e.g. -s loss.alpha=0.1");
}

cli::RunConfig load_run_config(const CommonFlags& flags) {
  cli::RunConfig config;
  if (!flags.config_path.empty()) config.load_file(flags.config_path);
  for (const std::string& entry : flags.sets) {
    auto eq = entry.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(msg("--set needs key=value, got '", entry, "'"));
    }
    config.apply(entry.substr(0, eq), entry.substr(eq + 1));
  }
  return config;
}

std::vector<std::size_t> labels_for_archive(
    const corpus::EmbeddingArchive& archive,
    const std::map<std::string, std::size_t>& label_map) {
  std::vector<std::size_t> labels;
  std::string missing;
  std::size_t missing_count = 0;
  for (const auto& id : archive.ids) {
    auto it = label_map.find(id);
    if (it == label_map.end()) {
      ++missing_count;
      if (missing_count <= 10) {
        if (!missing.empty()) missing += ", ";
        missing += id;
      }
      continue;
    }
    labels.push_back(it->second);
  }
  if (missing_count > 0) {
    throw InputError(msg("no label for ", missing_count, " utterances: [",
                         missing, missing_count > 10 ? ", ..." : "", "]"));
  }
  return labels;
}

int cmd_synth(const CommonFlags& flags, const std::string& out_dir) {
  cli::RunConfig config = load_run_config(flags);
  corpus::Corpus train_corpus = corpus::generate(config.synth);
  corpus::Corpus test_corpus = corpus::generate(config.test_synth_spec());
  auto trials = corpus::make_trials(test_corpus, config.trials_num_target,
                                    config.trials_num_nontarget,
                                    config.trials_seed);
  std::filesystem::create_directories(out_dir);
  corpus::save_corpus(out_dir + "/train", train_corpus);
  corpus::save_corpus(out_dir + "/test", test_corpus);
  corpus::save_trials(out_dir + "/trials.txt", trials);
  std::size_t train_frames = 0, test_frames = 0;
  for (const auto& u : train_corpus.utterances) train_frames += u.frames.rows();
  for (const auto& u : test_corpus.utterances) test_frames += u.frames.rows();
  std::printf("train: %zu speakers, %zu utterances, %zu frames, dim %zu\n",
              train_corpus.num_speakers, train_corpus.utterances.size(),
              train_frames, train_corpus.feat_dim);
  std::printf("test:  %zu speakers, %zu utterances, %zu frames, dim %zu\n",
              test_corpus.num_speakers, test_corpus.utterances.size(),
              test_frames, test_corpus.feat_dim);
  std::printf("trials: %zu target + %zu nontarget -> %s/trials.txt\n",
              config.trials_num_target, config.trials_num_nontarget,
              out_dir.c_str());
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& corpus_base,
              const std::string& out_model, const std::string& diagnostics_path) {
  cli::RunConfig config = load_run_config(flags);
  corpus::Corpus train_corpus = corpus::load_corpus(corpus_base);
  net::NetworkConfig net_config = config.network_config(
      train_corpus.feat_dim, train_corpus.num_speakers);
  loss::LossConfig loss_config = config.loss_config();
  train::TrainResult result =
      train::train(train_corpus, net_config, loss_config, config.train);
  net::save_model(out_model, net_config, result.params);
  if (!diagnostics_path.empty()) {
    corpus::atomic_write(diagnostics_path, [&](std::ostream& os) {
      os << train::diagnostics_csv(result.diagnostics);
    });
  }
  if (!result.diagnostics.empty()) {
    const auto& last = result.diagnostics.back();
    std::printf("trained %zu epochs: objective %.6g (ce %.6g, r %.6g), "
                "theta gap %.4g\n",
                config.train.epochs, last.objective, last.ce_part, last.r_part,
                last.theta_to_mean_gap);
  }
  std::printf("model -> %s\n", out_model.c_str());
  return kExitOk;
}

int cmd_extract(const std::string& model_path, const std::string& corpus_base,
                const std::string& out_archive) {
  net::Model model = net::load_model(model_path);
  corpus::Corpus data = corpus::load_corpus(corpus_base);
  corpus::EmbeddingArchive archive;
  archive.vectors = train::extract_embeddings(model.params, model.config, data);
  for (const auto& u : data.utterances) archive.ids.push_back(u.id);
  corpus::save_embeddings(out_archive, archive);
  std::printf("%zu embeddings of dim %zu -> %s\n", archive.vectors.rows(),
              archive.vectors.cols(), out_archive.c_str());
  return kExitOk;
}

int cmd_fit_backend(const CommonFlags& flags, const std::string& embeddings_path,
                    const std::string& labels_path, const std::string& out_path) {
  cli::RunConfig config = load_run_config(flags);
  corpus::EmbeddingArchive archive = corpus::load_embeddings(embeddings_path);
  auto label_map = corpus::load_labels(labels_path);
  std::vector<std::size_t> labels = labels_for_archive(archive, label_map);
  std::size_t num_classes = 0;
  for (std::size_t label : labels) num_classes = std::max(num_classes, label + 1);
  backend::BackendOptions options;
  options.kind = config.backend_kind;
  options.length_norm = config.length_norm;
  options.lda_dim = config.lda_dim;
  if (options.lda_dim == 0) {
    options.lda_dim = std::min<std::size_t>(num_classes - 1, 150);
    options.lda_dim = std::min(options.lda_dim, archive.vectors.cols());
  }
  backend::BackendModel model =
      backend::fit_backend(archive.vectors, labels, options);
  backend::save_backend(out_path, model);
  std::printf("%s backend (lda %zu%s) fitted on %zu embeddings -> %s\n",
              options.kind == backend::ScoringKind::kPlda ? "plda" : "cosine",
              options.lda_dim, options.length_norm ? ", length-norm" : "",
              archive.vectors.rows(), out_path.c_str());
  return kExitOk;
}

int cmd_score(const std::string& backend_path, const std::string& embeddings_path,
              const std::string& trials_path, const std::string& out_path) {
  backend::BackendModel model = backend::load_backend(backend_path);
  corpus::EmbeddingArchive archive = corpus::load_embeddings(embeddings_path);
  auto trials = corpus::load_trials(trials_path);
  eval::ScoreSet scores = backend::score_trials(model, archive, trials);
  corpus::save_scores(out_path, scores);
  std::printf("%zu trials scored -> %s\n", scores.size(), out_path.c_str());
  return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& scores_path,
             const std::string& trials_path, const std::string& label,
             const std::string& csv_path) {
  cli::RunConfig config = load_run_config(flags);
  auto raw = corpus::load_scores(scores_path);
  auto trials = corpus::load_trials(trials_path);
  std::map<std::pair<std::string, std::string>, bool> truth;
  for (const auto& t : trials) truth[{t.enroll_id, t.test_id}] = t.is_target;
  eval::ScoreSet scores;
  std::string missing;
  std::size_t missing_count = 0;
  for (const auto& r : raw) {
    auto it = truth.find({r.enroll_id, r.test_id});
    if (it == truth.end()) {
      ++missing_count;
      if (missing_count <= 10) {
        if (!missing.empty()) missing += ", ";
        missing += r.enroll_id + "/" + r.test_id;
      }
      continue;
    }
    scores.push_back({{r.enroll_id, r.test_id, it->second}, r.score});
  }
  if (missing_count > 0) {
    throw InputError(msg(missing_count, " scored pairs not in the trial list: [",
                         missing, missing_count > 10 ? ", ..." : "", "]"));
  }
  eval::Report report = eval::evaluate(scores);
  std::fputs(eval::format_report_text(label, report).c_str(), stdout);
  if (config.eval_p_target > 0.0) {
    const double extra = eval::min_dcf(
        eval::det_curve(scores), {config.eval_p_target, 1.0, 1.0});
    std::printf("DCF(%g) = %.4f\n", config.eval_p_target, extra);
  }
  if (!csv_path.empty()) {
    corpus::atomic_write(csv_path, [&](std::ostream& os) {
      os << eval::format_report_csv(label, report);
    });
  }
  return kExitOk;
}

int cmd_gradcheck(const CommonFlags& flags, const std::string& mode,
                  double tolerance, std::uint64_t seed) {
  cli::RunConfig config = load_run_config(flags);
  bool ok = true;
  auto run = [&](net::Mode m, const char* name) {
    cli::RunConfig mode_config = config;
    mode_config.mode = m;
    loss::LossConfig loss_config = mode_config.loss_config();
    net::NetworkConfig net_config = mode_config.network_config(8, 3);
    const double worst = train::gradient_check(net_config, loss_config, seed);
    std::printf("%s: max relative gradient error %.3g (tolerance %g)\n", name,
                worst, tolerance);
    ok = ok && worst < tolerance;
  };
  if (mode == "xvector" || mode == "both") run(net::Mode::kXvector, "xvector");
  if (mode == "dvector" || mode == "both") run(net::Mode::kDvector, "dvector");
  if (!ok) {
    std::fprintf(stderr, "gradient check failed tolerance %g\n", tolerance);
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_diagnose(const CommonFlags& flags, const std::string& model_path,
                 const std::string& corpus_base, const std::string& csv_path) {
  cli::RunConfig config = load_run_config(flags);
  net::Model model = net::load_model(model_path);
  corpus::Corpus data = corpus::load_corpus(corpus_base);
  cli::RunConfig mode_config = config;
  mode_config.mode = model.config.mode;
  loss::LossConfig loss_config = mode_config.loss_config();
  train::DiagnosticsRecord record =
      train::diagnose(model.params, model.config, loss_config, data);
  std::printf("objective %.6g  ce %.6g  r %.6g\n", record.objective,
              record.ce_part, record.r_part);
  std::printf("theta_gap %.6g  isotropy %.6g  skew %.6g  kurtosis %.6g\n",
              record.theta_to_mean_gap, record.within_class_isotropy,
              record.skewness_norm, record.excess_kurtosis_norm);
  if (!csv_path.empty()) {
    corpus::atomic_write(csv_path, [&](std::ostream& os) {
      os << train::diagnostics_csv({record});
    });
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gembed: Gaussian-constrained speaker embedding toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string out_dir = "data";
  std::string corpus_base, out_model = "model.gemb", diagnostics_path;
  std::string model_path, out_archive, embeddings_path, labels_path;
  std::string backend_path = "backend.gemb", trials_path, scores_path;
  std::string eval_label = "system", eval_csv;
  std::string gradcheck_mode = "both";
  double gradcheck_tolerance = 1e-4;
  std::uint64_t gradcheck_seed = 1;

  auto* synth = app.add_subcommand("synth", "generate synthetic corpora and trials");
  add_common(synth, &flags);
  synth->add_option("--out", out_dir, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train an embedding network");
  add_common(train_cmd, &flags);
  train_cmd->add_option("--corpus", corpus_base, "corpus base path (no extension)")
      ->required();
  train_cmd->add_option("--out", out_model, "model checkpoint path");
  train_cmd->add_option("--diagnostics", diagnostics_path, "per-epoch CSV path");
  std::string mode_flag, norm_flag;
  double alpha_flag = -1.0;
  long long replace_flag = -1, epochs_flag = -1, seed_flag = -1;
  std::string profile_flag;
  train_cmd->add_option("--mode", mode_flag, "xvector | dvector");
  train_cmd->add_option("--alpha", alpha_flag, "regularization strength");
  train_cmd->add_option("--norm-form", norm_flag, "squared | unsquared");
  train_cmd->add_option("--replace-every", replace_flag,
                        "full-info replacement cadence (epochs, 0 = never)");
  train_cmd->add_option("--epochs", epochs_flag, "training epochs");
  train_cmd->add_option("--seed", seed_flag, "training seed");
  train_cmd->add_option("--profile", profile_flag, "desk | paper");

  auto* extract = app.add_subcommand("extract", "extract utterance embeddings");
  extract->add_option("--model", model_path, "model checkpoint")->required();
  extract->add_option("--corpus", corpus_base, "corpus base path")->required();
  extract->add_option("--out", out_archive, "embedding archive path")->required();

  auto* fit = app.add_subcommand("fit-backend", "fit LDA and the scoring backend");
  add_common(fit, &flags);
  fit->add_option("--embeddings", embeddings_path, "training embedding archive")
      ->required();
  fit->add_option("--labels", labels_path, "corpus .utts sidecar with speakers")
      ->required();
  fit->add_option("--out", backend_path, "backend model path");
  std::string backend_flag;
  long long lda_flag = -1;
  bool length_norm_flag = false;
  fit->add_option("--backend", backend_flag, "plda | cosine");
  fit->add_option("--lda-dim", lda_flag, "LDA dimension (0 disables LDA)");
  fit->add_flag("--length-norm", length_norm_flag,
                "length-normalize before fitting/scoring");

  auto* score = app.add_subcommand("score", "score a trial list");
  score->add_option("--backend", backend_path, "backend model")->required();
  score->add_option("--embeddings", embeddings_path, "embedding archive")
      ->required();
  score->add_option("--trials", trials_path, "trial list")->required();
  score->add_option("--out", scores_path, "score file path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "detection metrics from scores");
  add_common(eval_cmd, &flags);
  eval_cmd->add_option("--scores", scores_path, "score file")->required();
  eval_cmd->add_option("--trials", trials_path, "trial list")->required();
  eval_cmd->add_option("--label", eval_label, "system name in the report");
  eval_cmd->add_option("--csv", eval_csv, "also write the report as CSV");
  double p_target_flag = -1.0;
  eval_cmd->add_option("--p-target", p_target_flag,
                       "extra DCF operating point");

  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "finite-difference gradient verification");
  add_common(gradcheck, &flags);
  gradcheck->add_option("--mode", gradcheck_mode, "xvector | dvector | both");
  gradcheck->add_option("--tolerance", gradcheck_tolerance, "pass threshold");
  gradcheck->add_option("--seed", gradcheck_seed, "harness seed");

  auto* diagnose = app.add_subcommand("diagnose", "embedding-space statistics");
  add_common(diagnose, &flags);
  diagnose->add_option("--model", model_path, "model checkpoint")->required();
  diagnose->add_option("--corpus", corpus_base, "corpus base path")->required();
  diagnose->add_option("--csv", eval_csv, "write the record as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) return cmd_synth(flags, out_dir);
    if (app.got_subcommand(train_cmd)) {
      if (!mode_flag.empty()) flags.sets.push_back("net.mode=" + mode_flag);
      if (!profile_flag.empty()) flags.sets.push_back("net.profile=" + profile_flag);
      if (alpha_flag >= 0.0) {
        flags.sets.push_back("loss.alpha=" + std::to_string(alpha_flag));
      }
      if (!norm_flag.empty()) flags.sets.push_back("loss.norm_form=" + norm_flag);
      if (replace_flag >= 0) {
        flags.sets.push_back("train.replace_every=" + std::to_string(replace_flag));
      }
      if (epochs_flag >= 0) {
        flags.sets.push_back("train.epochs=" + std::to_string(epochs_flag));
      }
      if (seed_flag >= 0) {
        flags.sets.push_back("train.seed=" + std::to_string(seed_flag));
      }
      return cmd_train(flags, corpus_base, out_model, diagnostics_path);
    }
    if (app.got_subcommand(extract)) {
      return cmd_extract(model_path, corpus_base, out_archive);
    }
    if (app.got_subcommand(fit)) {
      if (!backend_flag.empty()) flags.sets.push_back("backend.kind=" + backend_flag);
      if (lda_flag >= 0) {
        flags.sets.push_back("backend.lda_dim=" + std::to_string(lda_flag));
      }
      if (length_norm_flag) flags.sets.push_back("backend.length_norm=true");
      return cmd_fit_backend(flags, embeddings_path, labels_path, backend_path);
    }
    if (app.got_subcommand(score)) {
      return cmd_score(backend_path, embeddings_path, trials_path, scores_path);
    }
    if (app.got_subcommand(eval_cmd)) {
      if (p_target_flag > 0.0) {
        flags.sets.push_back("eval.p_target=" + std::to_string(p_target_flag));
      }
      return cmd_eval(flags, scores_path, trials_path, eval_label, eval_csv);
    }
    if (app.got_subcommand(gradcheck)) {
      return cmd_gradcheck(flags, gradcheck_mode, gradcheck_tolerance,
                           gradcheck_seed);
    }
    if (app.got_subcommand(diagnose)) {
      return cmd_diagnose(flags, model_path, corpus_base, eval_csv);
    }
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUser;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
