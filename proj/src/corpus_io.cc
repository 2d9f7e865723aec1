// src/corpus_io.cc

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

#include "gembed/corpus_io.h"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gembed/error.h"

namespace gembed {
namespace corpus {

namespace {

constexpr char kMagic[4] = {'G', 'E', 'M', 'X'};
constexpr unsigned char kVersion = 0x01;
constexpr std::size_t kHeaderBytes = 4 + 1 + 8 + 8;
// Refuse matrices whose payload would not plausibly fit in memory.
constexpr std::uint64_t kMaxElements = 1ULL << 40;

void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(const unsigned char* buf) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64_le(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(os, bits);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError(msg("cannot open ", path, " for reading"));
  return is;
}

}  // namespace

void write_matrix(std::ostream& os, const RealMatrix& m) {
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  put_u64_le(os, m.rows());
  put_u64_le(os, m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) put_f64_le(os, m.data()[i]);
}

RealMatrix read_matrix(std::istream& is, std::size_t base_offset) {
  unsigned char header[kHeaderBytes];
  is.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (static_cast<std::size_t>(is.gcount()) != kHeaderBytes) {
    throw FormatError("matrix: truncated header",
                      base_offset + static_cast<std::size_t>(is.gcount()));
  }
  if (std::memcmp(header, kMagic, 4) != 0) {
    throw FormatError("matrix: bad magic, expected GEMX", base_offset);
  }
  if (header[4] != kVersion) {
    throw FormatError(msg("matrix: unsupported version ", int(header[4])),
                      base_offset + 4);
  }
  std::uint64_t rows = get_u64_le(header + 5);
  std::uint64_t cols = get_u64_le(header + 13);
  if (rows > kMaxElements || cols > kMaxElements ||
      (cols != 0 && rows > kMaxElements / cols)) {
    throw FormatError(msg("matrix: dimensions ", rows, "x", cols, " overflow"),
                      base_offset + 5);
  }
  RealMatrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  const std::size_t payload = m.size() * 8;
  is.read(reinterpret_cast<char*>(m.data()), payload);
  if (static_cast<std::size_t>(is.gcount()) != payload) {
    throw FormatError("matrix: truncated payload",
                      base_offset + kHeaderBytes +
                          static_cast<std::size_t>(is.gcount()));
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, m.data() + i, 8);
      bits = __builtin_bswap64(bits);
      std::memcpy(m.data() + i, &bits, 8);
    }
  }
  if (!numkit::all_finite(m)) {
    throw FormatError("matrix: payload contains non-finite values",
                      base_offset + kHeaderBytes);
  }
  return m;
}

void atomic_write(const std::string& path,
                  const std::function<void(std::ostream&)>& writer) {
  const std::string tmp = path + ".tmp";
  try {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError(msg("cannot open ", tmp, " for writing"));
    writer(os);
    os.flush();
    if (!os) throw InputError(msg("write to ", tmp, " failed"));
  } catch (...) {
    std::error_code ignore;
    std::filesystem::remove(tmp, ignore);
    throw;
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw InputError(msg("cannot rename ", tmp, " to ", path, ": ", ec.message()));
  }
}

void save_matrix(const std::string& path, const RealMatrix& m) {
  atomic_write(path, [&](std::ostream& os) { write_matrix(os, m); });
}

RealMatrix load_matrix(const std::string& path) {
  std::ifstream is = open_input(path);
  RealMatrix m = read_matrix(is);
  // Anything after the payload is not ours.
  char extra;
  if (is.get(extra)) {
    throw FormatError("matrix: trailing bytes after payload",
                      kHeaderBytes + m.size() * 8);
  }
  return m;
}

void save_corpus(const std::string& base_path, const Corpus& corpus) {
  corpus.validate();
  std::size_t total_frames = 0;
  for (const auto& u : corpus.utterances) total_frames += u.frames.rows();
  RealMatrix all(total_frames, corpus.feat_dim);
  std::size_t row = 0;
  for (const auto& u : corpus.utterances) {
    for (std::size_t t = 0; t < u.frames.rows(); ++t, ++row) {
      for (std::size_t d = 0; d < corpus.feat_dim; ++d) {
        all(row, d) = u.frames(t, d);
      }
    }
  }
  save_matrix(base_path + ".gemx", all);
  atomic_write(base_path + ".utts", [&](std::ostream& os) {
    os << "#speakers " << corpus.num_speakers << "\n";
    for (const auto& u : corpus.utterances) {
      os << u.id << " " << u.speaker << " " << u.frames.rows() << "\n";
    }
  });
}

Corpus load_corpus(const std::string& base_path) {
  RealMatrix all = load_matrix(base_path + ".gemx");
  std::ifstream is = open_input(base_path + ".utts");
  Corpus corpus;
  corpus.feat_dim = all.cols();
  std::string line;
  std::size_t row = 0, line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string tag;
      ls >> tag;
      if (tag == "#speakers") ls >> corpus.num_speakers;
      continue;
    }
    Utterance u;
    std::size_t num_frames = 0;
    if (!(ls >> u.id >> u.speaker >> num_frames) || num_frames == 0) {
      throw FormatError(msg("corpus sidecar: malformed line ", line_no), 0);
    }
    if (row + num_frames > all.rows()) {
      throw FormatError(msg("corpus sidecar: frame counts exceed matrix rows at line ",
                            line_no), 0);
    }
    u.frames = RealMatrix(num_frames, corpus.feat_dim);
    for (std::size_t t = 0; t < num_frames; ++t, ++row) {
      for (std::size_t d = 0; d < corpus.feat_dim; ++d) {
        u.frames(t, d) = all(row, d);
      }
    }
    corpus.utterances.push_back(std::move(u));
  }
  if (row != all.rows()) {
    throw FormatError("corpus sidecar: frame counts do not cover matrix rows", 0);
  }
  corpus.validate();
  return corpus;
}

void save_trials(const std::string& path, const std::vector<eval::Trial>& trials) {
  atomic_write(path, [&](std::ostream& os) {
    for (const auto& t : trials) {
      os << t.enroll_id << " " << t.test_id << " "
         << (t.is_target ? "target" : "nontarget") << "\n";
    }
  });
}

std::vector<eval::Trial> load_trials(const std::string& path) {
  std::ifstream is = open_input(path);
  std::vector<eval::Trial> trials;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    eval::Trial t;
    std::string label;
    if (!(ls >> t.enroll_id >> t.test_id >> label) ||
        (label != "target" && label != "nontarget")) {
      throw FormatError(msg("trial list: malformed line ", line_no), 0);
    }
    t.is_target = label == "target";
    trials.push_back(std::move(t));
  }
  return trials;
}

void save_embeddings(const std::string& path, const EmbeddingArchive& archive) {
  if (archive.ids.size() != archive.vectors.rows()) {
    throw InputError("embedding archive: one id per row required");
  }
  save_matrix(path, archive.vectors);
  atomic_write(path + ".ids", [&](std::ostream& os) {
    for (const auto& id : archive.ids) os << id << "\n";
  });
}

EmbeddingArchive load_embeddings(const std::string& path) {
  EmbeddingArchive archive;
  archive.vectors = load_matrix(path);
  std::ifstream is = open_input(path + ".ids");
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) archive.ids.push_back(line);
  }
  if (archive.ids.size() != archive.vectors.rows()) {
    throw FormatError(msg("embedding archive: ", archive.vectors.rows(),
                          " rows but ", archive.ids.size(), " ids"), 0);
  }
  return archive;
}

void save_scores(const std::string& path, const eval::ScoreSet& scores) {
  atomic_write(path, [&](std::ostream& os) {
    char buf[64];
    for (const auto& st : scores) {
      std::snprintf(buf, sizeof(buf), "%.6f", st.score);
      os << st.trial.enroll_id << " " << st.trial.test_id << " " << buf << "\n";
    }
  });
}

std::vector<RawScore> load_scores(const std::string& path) {
  std::ifstream is = open_input(path);
  std::vector<RawScore> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RawScore s;
    if (!(ls >> s.enroll_id >> s.test_id >> s.score)) {
      throw FormatError(msg("score file: malformed line ", line_no), 0);
    }
    scores.push_back(std::move(s));
  }
  return scores;
}

std::map<std::string, std::size_t> load_labels(const std::string& utts_path) {
  std::ifstream is = open_input(utts_path);
  std::map<std::string, std::size_t> labels;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id;
    std::size_t speaker;
    if (ls >> id >> speaker) labels[id] = speaker;
  }
  return labels;
}

}  // namespace corpus
}  // namespace gembed
