#pragma once

#include <array>
#include <cmath>
#include <set>
#include <span>
#include <string>

#include "fair_context/error.hpp"

namespace fairctx {

/// Counts indexed by (s, y, prediction).
struct GroupConfusion {
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> counts{};

  static GroupConfusion from(std::span<const int> pred, std::span<const int> y,
                             std::span<const int> s) {
    require(pred.size() == y.size() && y.size() == s.size(), ErrorCode::dimension_mismatch,
            "prediction, label and group vectors differ in length");
    GroupConfusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) ++c.counts[s[i]][y[i]][pred[i]];
    return c;
  }

  std::size_t cell(int s, int y) const { return counts[s][y][0] + counts[s][y][1]; }
  std::size_t group(int s) const { return cell(s, 0) + cell(s, 1); }
  std::size_t positives(int s) const { return counts[s][0][1] + counts[s][1][1]; }
  std::size_t total() const { return group(0) + group(1); }
};

/// |P(pred=1 | s=0) - P(pred=1 | s=1)|
inline double demographic_parity_diff(std::span<const int> pred, std::span<const int> s) {
  require(pred.size() == s.size(), ErrorCode::dimension_mismatch, "pred/s length");
  std::array<double, 2> pos{}, n{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    n[s[i]] += 1;
    pos[s[i]] += pred[i];
  }
  for (int g : {0, 1})
    if (n[g] == 0) fail(ErrorCode::empty_group, "s=" + std::to_string(g));
  return std::abs(pos[0] / n[0] - pos[1] / n[1]);
}

/// alpha_j: |P(pred=1 | s=0, y=j) - P(pred=1 | s=1, y=j)|. alpha_0 compares
/// false-positive rates, alpha_1 true-positive rates.
inline double rate_diff(std::span<const int> pred, std::span<const int> y, std::span<const int> s,
                        int j) {
  const auto c = GroupConfusion::from(pred, y, s);
  for (int g : {0, 1})
    if (c.cell(g, j) == 0)
      fail(ErrorCode::empty_condition_cell, "s=" + std::to_string(g) + ", y=" + std::to_string(j));
  auto rate = [&](int g) {
    return static_cast<double>(c.counts[g][j][1]) / static_cast<double>(c.cell(g, j));
  };
  return std::abs(rate(0) - rate(1));
}

inline double equal_opportunity_diff(std::span<const int> pred, std::span<const int> y,
                                     std::span<const int> s) {
  return rate_diff(pred, y, s, 1);
}

/// alpha_0 + alpha_1 (the sum, not the max).
inline double equalized_odds_diff(std::span<const int> pred, std::span<const int> y,
                                  std::span<const int> s) {
  return rate_diff(pred, y, s, 0) + rate_diff(pred, y, s, 1);
}

inline double accuracy(std::span<const int> pred, std::span<const int> y) {
  require(pred.size() == y.size(), ErrorCode::dimension_mismatch, "pred/y length");
  require(!y.empty(), ErrorCode::empty_input, "no rows");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

/// 2TP / (2TP + FP + FN) for the positive class; 0 when the denominator is 0.
inline double f1(std::span<const int> pred, std::span<const int> y) {
  require(pred.size() == y.size(), ErrorCode::dimension_mismatch, "pred/y length");
  require(!y.empty(), ErrorCode::empty_input, "no rows");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    tp += pred[i] == 1 && y[i] == 1;
    fp += pred[i] == 1 && y[i] == 0;
    fn += pred[i] == 0 && y[i] == 1;
  }
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

/// All metrics for one evaluation. Undefined fairness metrics (empty
/// conditioning cell) are listed in `undefined` and left at 0.
struct MetricReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  double dp = 0.0;
  double eop = 0.0;
  double eod = 0.0;
  std::set<std::string> undefined;

  bool defined(const std::string& metric) const { return !undefined.contains(metric); }
};

inline MetricReport evaluate(std::span<const int> pred, std::span<const int> y,
                             std::span<const int> s) {
  MetricReport r;
  r.accuracy = accuracy(pred, y);
  r.f1 = f1(pred, y);
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::empty_group && e.code() != ErrorCode::empty_condition_cell) throw;
      r.undefined.insert(name);
      return 0.0;
    }
  };
  r.dp = guarded("dp", [&] { return demographic_parity_diff(pred, s); });
  r.eop = guarded("eop", [&] { return equal_opportunity_diff(pred, y, s); });
  r.eod = guarded("eod", [&] { return equalized_odds_diff(pred, y, s); });
  return r;
}

}  // namespace fairctx
