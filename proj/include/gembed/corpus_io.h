// gembed/corpus_io.h

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

#ifndef GEMBED_CORPUS_IO_H_
#define GEMBED_CORPUS_IO_H_

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gembed/corpus.h"
#include "gembed/matrix.h"
#include "gembed/metrics.h"

namespace gembed {
namespace corpus {

/// Matrix file format "GEMX" version 1:
///   magic bytes "GEMX", version byte 0x01,
///   rows and cols as unsigned 64-bit little-endian,
///   then rows*cols IEEE-754 little-endian 64-bit values, row-major.
/// Round trips are bit-exact. Malformed input raises FormatError carrying the
/// byte offset at which the problem was detected.
void save_matrix(const std::string& path, const RealMatrix& m);
RealMatrix load_matrix(const std::string& path);

/// Stream variants, used to pack several matrix sections into one file.
/// `base_offset` only adjusts the offsets reported in errors.
void write_matrix(std::ostream& os, const RealMatrix& m);
RealMatrix read_matrix(std::istream& is, std::size_t base_offset = 0);

/// Writes `content` to a temporary file next to `path`, then renames it into
/// place, so failed runs leave no partial output behind.
void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer);

/// A corpus on disk is a pair of files:
///   <base>.gemx  all frames concatenated (sum of num_frames x feat_dim)
///   <base>.utts  UTF-8 sidecar, one line per utterance:
///                "<id> <speaker> <num_frames>", plus a "#speakers N" header.
void save_corpus(const std::string& base_path, const Corpus& corpus);
Corpus load_corpus(const std::string& base_path);

/// Trial list: UTF-8 text, one line per trial,
/// "<enroll_id> <test_id> <target|nontarget>".
void save_trials(const std::string& path, const std::vector<eval::Trial>& trials);
std::vector<eval::Trial> load_trials(const std::string& path);

/// Embedding archive: one GEMX matrix (row per utterance) plus a UTF-8
/// sidecar "<path>.ids" listing one utterance id per row.
struct EmbeddingArchive {
  RealMatrix vectors;
  std::vector<std::string> ids;
};
void save_embeddings(const std::string& path, const EmbeddingArchive& archive);
EmbeddingArchive load_embeddings(const std::string& path);

/// Score file: UTF-8 text, "<enroll_id> <test_id> <score>" with six decimal
/// places.
void save_scores(const std::string& path, const eval::ScoreSet& scores);
struct RawScore {
  std::string enroll_id;
  std::string test_id;
  double score;
};
std::vector<RawScore> load_scores(const std::string& path);

/// Speaker labels keyed by utterance id, read from a corpus .utts sidecar.
std::map<std::string, std::size_t> load_labels(const std::string& utts_path);

}  // namespace corpus
}  // namespace gembed

#endif  // GEMBED_CORPUS_IO_H_
