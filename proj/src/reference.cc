// src/reference.cc

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

#include "gembed/reference.h"

#include <cmath>

#include "gembed/error.h"

namespace gembed {
namespace reference {

RealMatrix matmul(const RealMatrix& a, const RealMatrix& b) {
  if (a.cols() != b.rows()) throw InputError("reference::matmul: dimension mismatch");
  RealMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

numkit::MeanStd rowwise_mean_std(const RealMatrix& frames, double epsilon) {
  if (frames.rows() == 0) throw InputError("reference::rowwise_mean_std: zero rows");
  const std::size_t t = frames.rows(), d = frames.cols();
  numkit::MeanStd out;
  out.mean = RealVector(d);
  out.std = RealVector(d);
  for (std::size_t j = 0; j < d; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < t; ++i) sum += frames(i, j);
    out.mean[j] = sum / static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      double diff = frames(i, j) - out.mean[j];
      var += diff * diff;
    }
    out.std[j] = std::sqrt(var / static_cast<double>(t) + epsilon);
  }
  return out;
}

}  // namespace reference
}  // namespace gembed
