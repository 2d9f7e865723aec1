// src/metrics.cc

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

#include "gembed/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "gembed/error.h"

namespace gembed {
namespace eval {

DetCurve det_curve(const ScoreSet& scores) {
  std::vector<double> targets, nontargets;
  for (const auto& st : scores) {
    if (st.trial.is_target) {
      targets.push_back(st.score);
    } else {
      nontargets.push_back(st.score);
    }
  }
  if (targets.empty()) throw InputError("det_curve: no target trials");
  if (nontargets.empty()) throw InputError("det_curve: no nontarget trials");
  std::sort(targets.begin(), targets.end());
  std::sort(nontargets.begin(), nontargets.end());

  std::vector<double> thresholds;
  thresholds.reserve(targets.size() + nontargets.size());
  thresholds.insert(thresholds.end(), targets.begin(), targets.end());
  thresholds.insert(thresholds.end(), nontargets.begin(), nontargets.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  const double t_total = static_cast<double>(targets.size());
  const double n_total = static_cast<double>(nontargets.size());
  DetCurve curve;
  curve.points.reserve(thresholds.size() + 2);
  // Accept everything.
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (double thr : thresholds) {
    // Misses: targets with score < thr. False alarms: nontargets >= thr.
    auto t_below = std::lower_bound(targets.begin(), targets.end(), thr) -
                   targets.begin();
    auto n_below = std::lower_bound(nontargets.begin(), nontargets.end(), thr) -
                   nontargets.begin();
    double p_miss = static_cast<double>(t_below) / t_total;
    double p_fa = static_cast<double>(nontargets.size() - n_below) / n_total;
    curve.points.push_back({thr, p_miss, p_fa});
  }
  // Reject everything.
  curve.points.push_back({std::numeric_limits<double>::infinity(), 1.0, 0.0});
  return curve;
}

double eer(const DetCurve& curve) {
  if (curve.points.size() < 2) throw InputError("eer: degenerate curve");
  // p_miss - p_fa runs from -1 to +1 along the curve; find the sign change.
  for (std::size_t k = 0; k < curve.points.size(); ++k) {
    double d = curve.points[k].p_miss - curve.points[k].p_fa;
    if (d < 0.0) continue;
    if (d == 0.0) return curve.points[k].p_miss;
    if (k == 0) return curve.points[k].p_miss;
    const DetPoint& a = curve.points[k - 1];
    const DetPoint& b = curve.points[k];
    double da = a.p_miss - a.p_fa;
    double t = -da / (d - da);
    return a.p_miss + t * (b.p_miss - a.p_miss);
  }
  return curve.points.back().p_miss;
}

double min_dcf(const DetCurve& curve, const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0)) {
    throw InputError("min_dcf: p_target must lie strictly between 0 and 1");
  }
  if (!(params.cost_miss > 0.0 && params.cost_fa > 0.0)) {
    throw InputError("min_dcf: costs must be positive");
  }
  const double cm = params.cost_miss * params.p_target;
  const double cf = params.cost_fa * (1.0 - params.p_target);
  const double norm = std::min(cm, cf);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : curve.points) {
    double cost = (cm * p.p_miss + cf * p.p_fa) / norm;
    if (cost < best) best = cost;
  }
  return best;
}

Report evaluate(const ScoreSet& scores) {
  DetCurve curve = det_curve(scores);
  Report report;
  report.eer = eer(curve);
  report.eer_percent = 100.0 * report.eer;
  report.dcf_1e2 = min_dcf(curve, DcfParams{0.01, 1.0, 1.0});
  report.dcf_1e3 = min_dcf(curve, DcfParams{0.001, 1.0, 1.0});
  for (const auto& st : scores) {
    if (st.trial.is_target) {
      ++report.num_target;
    } else {
      ++report.num_nontarget;
    }
  }
  return report;
}

std::string format_report_text(const std::string& label, const Report& report) {
  char buf[256];
  std::string out = "Embedding                 DCF(10^-2)  DCF(10^-3)  EER(%)\n";
  std::snprintf(buf, sizeof(buf), "%-25s %-11.4f %-11.4f %.3f\n", label.c_str(),
                report.dcf_1e2, report.dcf_1e3, report.eer_percent);
  out += buf;
  return out;
}

std::string format_report_csv(const std::string& label, const Report& report) {
  char buf[256];
  std::string out = "label,dcf_1e2,dcf_1e3,eer_pct,eer,targets,nontargets\n";
  std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.8f,%zu,%zu\n",
                label.c_str(), report.dcf_1e2, report.dcf_1e3,
                report.eer_percent, report.eer, report.num_target,
                report.num_nontarget);
  out += buf;
  return out;
}

}  // namespace eval
}  // namespace gembed
