// gembed/threads.h

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

#ifndef GEMBED_THREADS_H_
#define GEMBED_THREADS_H_

namespace gembed {

/// Worker count for OpenMP regions: the runtime default, capped by the
/// GEMBED_THREADS environment variable when it is set to a positive integer.
/// Read once per process.
///
/// Every parallel loop in the toolkit writes disjoint outputs or reduces in a
/// fixed order, so results are bit-identical for any worker count.
int worker_count();

}  // namespace gembed

#endif  // GEMBED_THREADS_H_
