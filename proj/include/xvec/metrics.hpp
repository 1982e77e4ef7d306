// xvec/metrics.hpp

// Copyright 2026  xvec authors

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

#ifndef XVEC_METRICS_HPP_
#define XVEC_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xvec/archive.hpp"
#include "xvec/error.hpp"

namespace xvec {

struct ScoredTrials {
  std::vector<double> scores;
  std::vector<TrialLabel> labels;

  std::size_t size() const { return scores.size(); }

  void validate() const {
    if (scores.size() != labels.size())
      throw DataError("scored trials: " + std::to_string(scores.size()) +
                      " scores for " + std::to_string(labels.size()) +
                      " labels");
    std::size_t n_target = 0, n_nontarget = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores[i]))
        throw DataError("scored trials: non-finite score at index " +
                        std::to_string(i));
      (labels[i] == TrialLabel::kTarget ? n_target : n_nontarget)++;
    }
    if (n_target == 0 || n_nontarget == 0)
      throw DataError("scored trials: need at least one target and one "
                      "nontarget trial");
  }
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const {
    if (!(p_target > 0.0) || !(p_target < 1.0))
      throw ConfigError("dcf params: p_target must lie in (0, 1)");
    if (c_miss <= 0.0 || c_fa <= 0.0)
      throw ConfigError("dcf params: costs must be > 0");
  }
};

struct DetPoint {
  double threshold;
  double p_fa;
  double p_miss;
};

// Threshold sweep with decision "accept iff score >= threshold". One point
// per distinct score, ascending, plus a final reject-all point (reported at
// the maximum score for plotting convenience). The first point is always
// (P_fa=1, P_miss=0) and the last (P_fa=0, P_miss=1).
inline std::vector<DetPoint> det_points(const ScoredTrials &trials) {
  trials.validate();
  struct Entry {
    double score;
    bool target;
  };
  std::vector<Entry> entries(trials.size());
  std::size_t n_target = 0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    entries[i] = {trials.scores[i], trials.labels[i] == TrialLabel::kTarget};
    n_target += entries[i].target ? 1 : 0;
  }
  const std::size_t n_nontarget = trials.size() - n_target;
  std::sort(entries.begin(), entries.end(),
            [](const Entry &a, const Entry &b) { return a.score < b.score; });

  std::vector<DetPoint> points;
  // Walking thresholds upward: targets below the threshold are misses,
  // nontargets at or above it are false accepts.
  std::size_t targets_below = 0;
  std::size_t nontargets_below = 0;
  std::size_t i = 0;
  while (i < entries.size()) {
    const double s = entries[i].score;
    points.push_back(
        {s, static_cast<double>(n_nontarget - nontargets_below) /
                static_cast<double>(n_nontarget),
         static_cast<double>(targets_below) / static_cast<double>(n_target)});
    while (i < entries.size() && entries[i].score == s) {
      (entries[i].target ? targets_below : nontargets_below)++;
      i++;
    }
  }
  points.push_back({entries.back().score, 0.0, 1.0});
  return points;
}

struct EerResult {
  double eer;
  double threshold;
};

// Linear interpolation at the first sign change of P_fa - P_miss along the
// sweep. Conventions differ across tools by a few 1e-4 on small lists; this
// one is frozen by the brute-force oracle in the tests.
inline EerResult eer(const ScoredTrials &trials) {
  const std::vector<DetPoint> points = det_points(trials);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double d0 = points[i].p_fa - points[i].p_miss;
    const double d1 = points[i + 1].p_fa - points[i + 1].p_miss;
    if (d0 >= 0.0 && d1 <= 0.0) {
      const double denom = d0 - d1;
      const double alpha = denom == 0.0 ? 0.0 : d0 / denom;
      const double value =
          points[i].p_fa + alpha * (points[i + 1].p_fa - points[i].p_fa);
      const double threshold =
          points[i].threshold +
          alpha * (points[i + 1].threshold - points[i].threshold);
      return {std::clamp(value, 0.0, 1.0), threshold};
    }
  }
  throw NumericError("eer: no crossing found in sweep");
}

struct DcfResult {
  double dcf;
  double threshold;
};

// Minimum normalized detection cost over the same sweep as det_points.
inline DcfResult min_dcf(const ScoredTrials &trials, const DcfParams &params) {
  params.validate();
  const std::vector<DetPoint> points = det_points(trials);
  const double norm = std::min(params.c_miss * params.p_target,
                               params.c_fa * (1.0 - params.p_target));
  DcfResult best{0.0, 0.0};
  bool first = true;
  for (const DetPoint &pt : points) {
    const double cost = params.c_miss * pt.p_miss * params.p_target +
                        params.c_fa * pt.p_fa * (1.0 - params.p_target);
    const double dcf = cost / norm;
    if (first || dcf < best.dcf) {
      best = {dcf, pt.threshold};
      first = false;
    }
  }
  best.dcf = std::clamp(best.dcf, 0.0, 1.0);
  return best;
}

}  // namespace xvec

#endif  // XVEC_METRICS_HPP_
