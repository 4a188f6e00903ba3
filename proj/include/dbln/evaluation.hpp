// Copyright 2026 The DBLN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Segment-adjusted scoring with an allowed detection delay k. A run of true
// anomalies counts as found when some prediction fires within k steps of its
// start; the whole run is then marked detected, otherwise the whole run is
// marked missed. Metrics are point-wise on the adjusted predictions.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace dbln {

/// Inclusive index range of a maximal run of 1s (0-based).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const Segment&) const = default;
};

inline std::vector<Segment> segments(std::span<const int> truth) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 0 && truth[i] != 1) {
      throw std::invalid_argument("label at index " + std::to_string(i) + " is " +
                                  std::to_string(truth[i]) + ", expected 0 or 1");
    }
    if (truth[i] == 1 && (i == 0 || truth[i - 1] == 0)) out.push_back({i, i});
    if (truth[i] == 1) out.back().end = i;
  }
  return out;
}

inline std::vector<int> adjust_labels(std::span<const int> truth, std::span<const int> pred,
                                      std::size_t delay) {
  if (truth.size() != pred.size()) {
    throw std::invalid_argument("truth has " + std::to_string(truth.size()) +
                                " labels but prediction has " + std::to_string(pred.size()));
  }
  std::vector<int> adjusted(pred.begin(), pred.end());
  for (const Segment& s : segments(truth)) {
    const std::size_t last = std::min(s.end, s.start + delay);
    bool hit = false;
    for (std::size_t t = s.start; t <= last && !hit; ++t) hit = pred[t] == 1;
    std::fill(adjusted.begin() + static_cast<std::ptrdiff_t>(s.start),
              adjusted.begin() + static_cast<std::ptrdiff_t>(s.end) + 1, hit ? 1 : 0);
  }
  return adjusted;
}

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t delay = 0;
  double sigma_multiplier = 0.0;
};

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}, {"tp", r.tp},
       {"fp", r.fp},               {"fn", r.fn},         {"k", r.delay}, {"n", r.sigma_multiplier}};
}

/// Point-wise precision/recall/F1 of `adjusted` against `truth`; 0/0 is 0.
inline EvalReport prf(std::span<const int> truth, std::span<const int> adjusted) {
  if (truth.size() != adjusted.size()) {
    throw std::invalid_argument("truth and prediction lengths differ");
  }
  EvalReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (adjusted[i] == 1 && truth[i] == 1) ++r.tp;
    if (adjusted[i] == 1 && truth[i] == 0) ++r.fp;
    if (adjusted[i] == 0 && truth[i] == 1) ++r.fn;
  }
  const double tp = static_cast<double>(r.tp);
  r.precision = r.tp + r.fp > 0 ? tp / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? tp / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Thresholds scores strictly (score > n) into binary predictions.
inline std::vector<int> threshold(std::span<const double> scores, double n) {
  std::vector<int> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > n ? 1 : 0;
  return pred;
}

inline EvalReport evaluate(std::span<const int> truth, std::span<const double> scores, std::size_t delay,
                           double n) {
  const auto adjusted = adjust_labels(truth, threshold(scores, n), delay);
  EvalReport r = prf(truth, adjusted);
  r.delay = delay;
  r.sigma_multiplier = n;
  return r;
}

using Curve = std::vector<std::pair<double, EvalReport>>;

inline Curve sweep_curves(std::span<const int> truth, std::span<const double> scores, std::size_t delay,
                          std::span<const double> n_grid) {
  if (n_grid.empty()) throw std::invalid_argument("sigma multiplier grid is empty");
  if (truth.size() != scores.size()) throw std::invalid_argument("scores are not aligned with truth");
  Curve curve;
  curve.reserve(n_grid.size());
  for (double n : n_grid) curve.emplace_back(n, evaluate(truth, scores, delay, n));
  return curve;
}

/// 0.25, 0.5, ..., 10.
inline std::vector<double> default_sigma_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 40; ++i) grid.push_back(0.25 * i);
  return grid;
}

/// Every distinct score plus one value below all of them: each operating
/// point the scores can produce.
inline std::vector<double> score_thresholds(std::span<const double> scores) {
  std::vector<double> grid(scores.begin(), scores.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  grid.insert(grid.begin(), grid.empty() ? -1.0 : grid.front() - 1.0);
  return grid;
}

/// Area under the precision-recall curve as sum (R_i - R_{i-1}) P_i over
/// points ordered by recall, starting from recall 0; equal recalls keep the
/// best precision.
inline double pr_auc(const Curve& curve) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& [n, r] : curve) pts.emplace_back(r.recall, r.precision);
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second > b.second);
  });
  double area = 0.0;
  double prev_recall = 0.0;
  for (const auto& [recall, precision] : pts) {
    if (recall <= prev_recall) continue;
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

inline void write_curve_csv(std::ostream& out, const Curve& curve) {
  out << "n,precision,recall,f1\n" << std::setprecision(17);
  for (const auto& [n, r] : curve) out << n << ',' << r.precision << ',' << r.recall << ',' << r.f1 << '\n';
}

inline nlohmann::json curve_json(const Curve& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [n, r] : curve) arr.push_back(r);
  return arr;
}

/// 3 for hourly (or coarser) sampling, 7 otherwise.
inline std::size_t default_delay(double interval_seconds) { return interval_seconds >= 3600.0 ? 3 : 7; }

}  // namespace dbln
