// src/threads.cc

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

#include "gembed/threads.h"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gembed {

static int compute_worker_count() {
#ifdef _OPENMP
  int count = omp_get_max_threads();
#else
  int count = 1;
#endif
  if (const char* env = std::getenv("GEMBED_THREADS")) {
    char* end = nullptr;
    long requested = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && requested > 0 && requested < count) {
      count = static_cast<int>(requested);
    }
  }
  return count < 1 ? 1 : count;
}

int worker_count() {
  static int count = compute_worker_count();
  return count;
}

}  // namespace gembed
