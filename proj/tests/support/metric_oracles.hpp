// SPDX-License-Identifier: Apache-2.0
// Brute-force reference implementations of the safety metrics. Quadratic on
// purpose and structurally independent of the production code: thresholds are
// enumerated through a set and every count is a full rescan.
#pragma once

#include <cstdint>
#include <set>
#include <vector>

namespace segobs::testing {

struct OraclePoint {
  double threshold, precision, recall;
};

inline std::vector<OraclePoint> oracle_pr(const std::vector<double>& scores,
                                          const std::vector<std::uint8_t>& correct) {
  std::size_t total_correct = 0;
  for (auto c : correct) total_correct += c != 0;
  std::set<double> thresholds(scores.begin(), scores.end());
  std::vector<OraclePoint> points;
  for (double t : thresholds) {
    std::size_t acc = 0, acc_corr = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] <= t) {
        ++acc;
        acc_corr += correct[i] != 0;
      }
    }
    points.push_back({t, static_cast<double>(acc_corr) / static_cast<double>(acc),
                      static_cast<double>(acc_corr) / static_cast<double>(total_correct)});
  }
  return points;
}

inline double oracle_recall_at_precision(const std::vector<OraclePoint>& pts, double p) {
  double best = 0;
  for (const auto& pt : pts)
    if (pt.precision >= p && pt.recall > best) best = pt.recall;
  return best;
}

inline double oracle_aupr(const std::vector<OraclePoint>& pts) {
  double area = 0, prev = 0;
  for (const auto& pt : pts) {  // set iteration is ascending by threshold
    area += (pt.recall - prev) * pt.precision;
    prev = pt.recall;
  }
  return area;
}

/// Repeated min-extraction (score, then original index) instead of a sort.
inline double oracle_image_coverage(const std::vector<double>& scores, const std::vector<std::uint8_t>& correct,
                                    double p) {
  const std::size_t n = scores.size();
  std::vector<bool> taken(n, false);
  std::size_t good = 0, best = 0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (pick == n || scores[i] < scores[pick]) pick = i;
    }
    taken[pick] = true;
    good += correct[pick] != 0;
    if (static_cast<double>(good) / static_cast<double>(k + 1) >= p) best = k + 1;
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

inline double oracle_trigger_rate(const std::vector<double>& coverages, double x) {
  std::size_t hits = 0;
  for (double c : coverages)
    if (c >= x) ++hits;
  return static_cast<double>(hits) / static_cast<double>(coverages.size());
}

}  // namespace segobs::testing
