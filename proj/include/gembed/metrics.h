// gembed/metrics.h

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

#ifndef GEMBED_METRICS_H_
#define GEMBED_METRICS_H_

#include <cstddef>
#include <string>
#include <vector>

namespace gembed {
namespace eval {

/// One verification trial: an (enrollment, test) utterance pair, labeled
/// target when both come from the same speaker.
struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool is_target = false;

  bool operator==(const Trial&) const = default;
};

struct ScoredTrial {
  Trial trial;
  double score = 0.0;
};

using ScoreSet = std::vector<ScoredTrial>;

struct DcfParams {
  double p_target = 0.01;
  double cost_miss = 1.0;
  double cost_fa = 1.0;
};

struct DetPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

/// Error tradeoff swept over every distinct score plus -inf/+inf sentinels,
/// with the decision rule "accept if score >= threshold". Thresholds ascend;
/// p_miss is non-decreasing and p_fa non-increasing along the curve.
struct DetCurve {
  std::vector<DetPoint> points;
};

DetCurve det_curve(const ScoreSet& scores);

/// Equal error rate in [0, 1]: the p_miss = p_fa crossing, linearly
/// interpolated between the two adjacent curve points that straddle it.
double eer(const DetCurve& curve);

/// Minimum normalized detection cost: min over thresholds of
/// (C_miss*P_tar*p_miss + C_fa*(1-P_tar)*p_fa) / min(C_miss*P_tar, C_fa*(1-P_tar)).
double min_dcf(const DetCurve& curve, const DcfParams& params);

struct Report {
  double dcf_1e2 = 0.0;   // minDCF at P_tar = 0.01, unit costs
  double dcf_1e3 = 0.0;   // minDCF at P_tar = 0.001, unit costs
  double eer = 0.0;       // fraction
  double eer_percent = 0.0;
  std::size_t num_target = 0;
  std::size_t num_nontarget = 0;
};

Report evaluate(const ScoreSet& scores);

/// Aligned plain text, one metrics row per labeled system:
/// columns DCF(10^-2), DCF(10^-3), EER(%).
std::string format_report_text(const std::string& label, const Report& report);

/// CSV with header "label,dcf_1e2,dcf_1e3,eer_pct,eer,targets,nontargets".
std::string format_report_csv(const std::string& label, const Report& report);

}  // namespace eval
}  // namespace gembed

#endif  // GEMBED_METRICS_H_
