#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

#include "fair_context/error.hpp"

namespace fairctx {

struct ParetoPoint {
  double accuracy = 0.0;
  double unfairness = 0.0;
  nlohmann::ordered_json config;
};

struct ParetoResult {
  std::vector<ParetoPoint> front;        // descending accuracy
  std::vector<std::size_t> front_index;  // positions in the input
  std::vector<std::size_t> duplicates;   // inputs equal to an earlier point
  std::vector<bool> on_front;            // per input point
};

/// a dominates b: no worse on both axes (max accuracy, min unfairness) and
/// strictly better on one.
inline bool dominates(const ParetoPoint& a, const ParetoPoint& b) {
  return a.accuracy >= b.accuracy && a.unfairness <= b.unfairness &&
         (a.accuracy > b.accuracy || a.unfairness < b.unfairness);
}

/// Non-dominated points. Of several identical points only the first is kept
/// and the rest are listed as duplicates.
inline ParetoResult pareto_front(const std::vector<ParetoPoint>& points) {
  require(!points.empty(), ErrorCode::empty_input, "no points");
  ParetoResult out;
  out.on_front.assign(points.size(), false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool duplicate = false;
    for (std::size_t j = 0; j < i && !duplicate; ++j)
      duplicate = points[j].accuracy == points[i].accuracy && points[j].unfairness == points[i].unfairness;
    if (duplicate) {
      out.duplicates.push_back(i);
      continue;
    }
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j) dominated = dominates(points[j], points[i]);
    if (!dominated) {
      out.on_front[i] = true;
      out.front_index.push_back(i);
    }
  }
  std::stable_sort(out.front_index.begin(), out.front_index.end(), [&](std::size_t a, std::size_t b) {
    return points[a].accuracy > points[b].accuracy;
  });
  for (auto i : out.front_index) out.front.push_back(points[i]);
  return out;
}

}  // namespace fairctx
