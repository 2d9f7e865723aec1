// gembed/error.h

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

#ifndef GEMBED_ERROR_H_
#define GEMBED_ERROR_H_

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gembed {

/// Base class for everything thrown by this toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad arguments from the caller: dimension mismatches, out-of-range labels,
/// unresolved identifiers. Maps to exit code 2 at the CLI.
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg) : Error(msg) {}
};

/// Invalid configuration (bad key, inconsistent settings, infeasible request).
/// Maps to exit code 2 at the CLI.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Malformed file contents. Carries the byte offset at which the problem was
/// detected. Maps to exit code 2 at the CLI.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Numerical failure: divergence, failed convergence, non-finite values.
/// Maps to exit code 3 at the CLI.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

/// A matrix decomposition failed. Carries the index of the failing pivot.
class DecompositionError : public NumericalError {
 public:
  DecompositionError(const std::string& msg, std::size_t pivot_index)
      : NumericalError(msg + " (pivot " + std::to_string(pivot_index) + ")"),
        pivot_index_(pivot_index) {}
  std::size_t pivot_index() const { return pivot_index_; }

 private:
  std::size_t pivot_index_;
};

namespace detail {
inline void append_msg(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_msg(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  append_msg(os, rest...);
}
}  // namespace detail

/// Builds an error message out of stream-printable pieces.
template <typename... Parts>
std::string msg(const Parts&... parts) {
  std::ostringstream os;
  detail::append_msg(os, parts...);
  return os.str();
}

}  // namespace gembed

#endif  // GEMBED_ERROR_H_
