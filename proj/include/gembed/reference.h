// gembed/reference.h

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

#ifndef GEMBED_REFERENCE_H_
#define GEMBED_REFERENCE_H_

#include "gembed/matrix.h"

namespace gembed {
namespace reference {

/// Serial counterparts of the parallel numkit kernels. These stay
/// deliberately naive: tests use them as independent oracles and the bench
/// tool compares them against the production kernels.

/// Naive triple-loop matrix product.
RealMatrix matmul(const RealMatrix& a, const RealMatrix& b);

/// Two-pass per-column mean and population standard deviation,
/// std = sqrt(var + epsilon).
numkit::MeanStd rowwise_mean_std(const RealMatrix& frames, double epsilon);

}  // namespace reference
}  // namespace gembed

#endif  // GEMBED_REFERENCE_H_
