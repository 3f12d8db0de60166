#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fair_context/conformal.hpp"
#include "fair_context/error.hpp"
#include "fair_context/random.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx {

/// Demonstration rows picked from a source of `source_size` rows. Indices
/// are unique and ascending.
struct SelectionResult {
  Indices indices;
  std::string method;
  nlohmann::json params = nlohmann::json::object();
  std::size_t source_size = 0;
};

inline nlohmann::json to_json(const SelectionResult& sel) {
  return {{"method", sel.method},
          {"indices", sel.indices},
          {"params", sel.params},
          {"source_size", sel.source_size}};
}

inline SelectionResult select_all(std::size_t n) {
  SelectionResult sel;
  sel.indices.resize(n);
  std::iota(sel.indices.begin(), sel.indices.end(), std::size_t{0});
  sel.method = "vanilla";
  sel.source_size = n;
  return sel;
}

/// Equal-size uniform samples from each sensitive group. Per-group count is
/// the minority size, or floor(budget/2) if smaller; an odd budget gives its
/// spare slot to the minority group (group 1 on a size tie).
inline SelectionResult select_balanced(std::span<const int> sensitive,
                                       std::optional<std::size_t> budget, std::uint64_t seed) {
  std::array<Indices, 2> groups;
  for (std::size_t i = 0; i < sensitive.size(); ++i) groups[sensitive[i]].push_back(i);
  for (int g : {0, 1})
    if (groups[g].empty()) fail(ErrorCode::empty_group, "s=" + std::to_string(g));

  const int minority = groups[1].size() <= groups[0].size() ? 1 : 0;
  std::size_t per_group = groups[minority].size();
  std::size_t minority_count = per_group;
  if (budget) {
    per_group = std::min(per_group, *budget / 2);
    minority_count = per_group;
    if (*budget % 2 == 1 && groups[minority].size() > per_group) ++minority_count;
  }

  Rng rng(seed);
  SelectionResult sel;
  for (int g : {0, 1}) {
    auto picked = rng.sample(groups[g], g == minority ? minority_count : per_group);
    sel.indices.insert(sel.indices.end(), picked.begin(), picked.end());
  }
  std::sort(sel.indices.begin(), sel.indices.end());
  sel.method = "balanced";
  sel.params["seed"] = seed;
  if (budget) sel.params["budget"] = *budget;
  sel.source_size = sensitive.size();
  return sel;
}

inline SelectionResult select_balanced(const Dataset& ds, std::optional<std::size_t> budget,
                                       std::uint64_t seed) {
  return select_balanced(ds.sensitive, budget, seed);
}

/// Rows whose conformal prediction set holds both labels. With no such rows,
/// raises EmptySelection unless `fallback` > 0, in which case the `fallback`
/// rows with the smallest |p_hat - 0.5| are kept (ties by index).
inline SelectionResult select_uncertain(const Vector& p_hat, double tau, double epsilon,
                                        std::size_t fallback = 0) {
  const auto mask = uncertainty_mask(tau, p_hat);
  SelectionResult sel;
  sel.method = "uncertain";
  sel.params["epsilon"] = epsilon;
  sel.params["tau"] = tau;
  sel.source_size = mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) sel.indices.push_back(i);
  if (sel.indices.empty()) {
    if (fallback == 0 || mask.empty())
      fail(ErrorCode::empty_selection,
           "no uncertain rows (tau=" + csv::format_number(tau) + ", epsilon=" +
               csv::format_number(epsilon) + ")");
    Indices order(mask.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto margin = [&](std::size_t i) { return std::abs(p_hat(static_cast<Eigen::Index>(i)) - 0.5); };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return margin(a) < margin(b); });
    order.resize(std::min(fallback, order.size()));
    std::sort(order.begin(), order.end());
    sel.indices = std::move(order);
    sel.params["fallback"] = fallback;
  }
  return sel;
}

inline SelectionResult select_uncertain(const Dataset& ds, const ConformalModel& model,
                                        std::size_t fallback = 0) {
  require(model.classifier != nullptr, ErrorCode::invalid_argument, "model not calibrated");
  return select_uncertain(model.classifier->predict_proba(ds.features), model.tau, model.epsilon,
                          fallback);
}

/// Uniform subsample to exactly max_context rows when the selection is larger.
inline SelectionResult cap_random(SelectionResult sel, std::size_t max_context, std::uint64_t seed) {
  require(max_context >= 1, ErrorCode::invalid_argument, "max_context must be >= 1");
  if (sel.indices.size() <= max_context) return sel;
  Rng rng(seed);
  sel.indices = rng.sample(std::move(sel.indices), max_context);
  sel.params["cap"] = max_context;
  sel.params["cap_seed"] = seed;
  return sel;
}

}  // namespace fairctx
