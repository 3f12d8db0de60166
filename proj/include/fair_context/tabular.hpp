#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fair_context/csv.hpp"
#include "fair_context/error.hpp"
#include "fair_context/random.hpp"

namespace fairctx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = std::vector<int>;
using Indices = std::vector<std::size_t>;

/// Non-sensitive features Z, binary sensitive attribute S and binary target Y,
/// row-aligned. Immutable by convention once validated.
struct Dataset {
  Matrix features;
  Labels sensitive;
  Labels target;
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;

  std::size_t size() const { return target.size(); }
  std::size_t n_features() const { return static_cast<std::size_t>(features.cols()); }

  void validate() const {
    const std::size_t n = target.size();
    require(n >= 1, ErrorCode::empty_dataset, "dataset has no rows");
    require(sensitive.size() == n && row_ids.size() == n &&
                static_cast<std::size_t>(features.rows()) == n,
            ErrorCode::dimension_mismatch, "row-indexed collections differ in length");
    require(feature_names.size() == n_features(), ErrorCode::dimension_mismatch,
            "feature_names does not match feature columns");
    for (std::size_t i = 0; i < n; ++i) {
      require(sensitive[i] == 0 || sensitive[i] == 1, ErrorCode::non_binary_column,
              "sensitive value at row " + std::to_string(i));
      require(target[i] == 0 || target[i] == 1, ErrorCode::non_binary_column,
              "target value at row " + std::to_string(i));
    }
    require(features.allFinite(), ErrorCode::invalid_argument, "features contain NaN/Inf");
  }

  Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
    out.sensitive.reserve(rows.size());
    out.target.reserve(rows.size());
    out.row_ids.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = rows[r];
      require(i < size(), ErrorCode::invalid_argument, "row index out of range");
      out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(i));
      out.sensitive.push_back(sensitive[i]);
      out.target.push_back(target[i]);
      out.row_ids.push_back(row_ids[i]);
    }
    out.feature_names = feature_names;
    return out;
  }
};

inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

inline Labels select_labels(std::span<const int> labels, std::span<const std::size_t> rows) {
  Labels out;
  out.reserve(rows.size());
  for (auto i : rows) out.push_back(labels[i]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvColumns {
  std::string target;
  std::string sensitive;
  std::string positive_target = "1";
  std::string positive_sensitive = "1";
};

struct LoadResult {
  Dataset dataset;
  std::size_t dropped_rows = 0;
};

namespace detail {

inline bool is_missing(const std::string& v) {
  return v.empty() || v == "NA" || v == "N/A" || v == "?" || v == "nan" || v == "NaN";
}

inline std::size_t column_index(const csv::Row& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) fail(ErrorCode::missing_column, name);
  return static_cast<std::size_t>(it - header.begin());
}

inline Labels binarize(const std::vector<const std::string*>& values, const std::string& column,
                       const std::string& positive) {
  std::set<std::string> distinct;
  for (auto* v : values) distinct.insert(*v);
  if (distinct.size() > 2) fail(ErrorCode::non_binary_column, column);
  if (distinct.size() == 2 && !distinct.contains(positive))
    fail(ErrorCode::invalid_argument,
         "positive value '" + positive + "' not present in column " + column);
  Labels out;
  out.reserve(values.size());
  for (auto* v : values) out.push_back(*v == positive ? 1 : 0);
  return out;
}

}  // namespace detail

/// Builds a Dataset from a parsed table. Non-target, non-sensitive columns
/// become features: numeric columns pass through, anything else is one-hot
/// encoded as `col=value` indicators in lexicographic value order. Rows with
/// a missing value in any used column are dropped and counted.
inline LoadResult load_table(const csv::Table& table, const CsvColumns& cols) {
  const std::size_t t_col = detail::column_index(table.header, cols.target);
  const std::size_t s_col = detail::column_index(table.header, cols.sensitive);

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != t_col && c != s_col) feature_cols.push_back(c);

  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool missing = detail::is_missing(row[t_col]) || detail::is_missing(row[s_col]);
    for (auto c : feature_cols) missing = missing || detail::is_missing(row[c]);
    if (!missing) {
      for (auto c : feature_cols) {
        double v;
        if (csv::parse_number(row[c], v) && !std::isfinite(v)) missing = true;
      }
    }
    if (!missing) kept.push_back(r);
  }
  LoadResult result;
  result.dropped_rows = table.rows.size() - kept.size();
  if (kept.empty()) fail(ErrorCode::empty_dataset, "all rows dropped");

  struct Column {
    std::size_t source;
    bool numeric;
    std::vector<std::string> levels;
  };
  std::vector<Column> layout;
  std::size_t width = 0;
  for (auto c : feature_cols) {
    Column col{c, true, {}};
    double v;
    for (auto r : kept) col.numeric = col.numeric && csv::parse_number(table.rows[r][c], v);
    if (!col.numeric) {
      std::set<std::string> levels;
      for (auto r : kept) levels.insert(table.rows[r][c]);
      col.levels.assign(levels.begin(), levels.end());
    }
    width += col.numeric ? 1 : col.levels.size();
    layout.push_back(std::move(col));
  }

  Dataset& ds = result.dataset;
  ds.features = Matrix::Zero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(width));
  Eigen::Index out_col = 0;
  for (const auto& col : layout) {
    const std::string& name = table.header[col.source];
    if (col.numeric) {
      ds.feature_names.push_back(name);
      for (std::size_t k = 0; k < kept.size(); ++k) {
        double v = 0.0;
        csv::parse_number(table.rows[kept[k]][col.source], v);
        ds.features(static_cast<Eigen::Index>(k), out_col) = v;
      }
      ++out_col;
    } else {
      for (const auto& level : col.levels) {
        ds.feature_names.push_back(name + "=" + level);
        for (std::size_t k = 0; k < kept.size(); ++k)
          if (table.rows[kept[k]][col.source] == level)
            ds.features(static_cast<Eigen::Index>(k), out_col) = 1.0;
        ++out_col;
      }
    }
  }

  std::vector<const std::string*> t_vals, s_vals;
  for (auto r : kept) {
    t_vals.push_back(&table.rows[r][t_col]);
    s_vals.push_back(&table.rows[r][s_col]);
    ds.row_ids.push_back(std::to_string(r));
  }
  ds.target = detail::binarize(t_vals, cols.target, cols.positive_target);
  ds.sensitive = detail::binarize(s_vals, cols.sensitive, cols.positive_sensitive);
  ds.validate();
  return result;
}

inline LoadResult load_csv(const std::string& path, const CsvColumns& cols) {
  return load_table(csv::read_file(path), cols);
}

/// Writes features, then `sensitive` and `target` columns (0/1).
inline void write_csv(const Dataset& ds, std::ostream& out) {
  csv::Row header = ds.feature_names;
  header.push_back("sensitive");
  header.push_back("target");
  csv::write_row(out, header);
  csv::Row row(header.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.n_features(); ++j)
      row[j] = csv::format_number(ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    row[ds.n_features()] = std::to_string(ds.sensitive[i]);
    row[ds.n_features() + 1] = std::to_string(ds.target[i]);
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------------------
// Splitting. All splits stratify on the joint (target, sensitive) cell.

inline std::size_t stratum(int y, int s) { return static_cast<std::size_t>(2 * y + s); }

inline std::array<Indices, 4> strata(std::span<const int> target, std::span<const int> sensitive) {
  std::array<Indices, 4> cells;
  for (std::size_t i = 0; i < target.size(); ++i) cells[stratum(target[i], sensitive[i])].push_back(i);
  return cells;
}

struct HoldoutSplit {
  Indices main_rows;
  Indices holdout_rows;
  Dataset main;
  Dataset holdout;
  std::vector<std::string> warnings;
};

inline HoldoutSplit holdout_split(const Dataset& ds, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::invalid_argument,
          "holdout fraction must lie in (0,1)");
  Rng rng(seed);
  HoldoutSplit out;
  auto cells = strata(ds.target, ds.sensitive);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& cell = cells[c];
    if (cell.empty()) {
      out.warnings.push_back("DegenerateStratum: empty (y=" + std::to_string(c / 2) +
                             ", s=" + std::to_string(c % 2) + ") cell");
      continue;
    }
    rng.shuffle(cell);
    const auto take = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(cell.size())));
    out.holdout_rows.insert(out.holdout_rows.end(), cell.begin(), cell.begin() + static_cast<std::ptrdiff_t>(take));
    out.main_rows.insert(out.main_rows.end(), cell.begin() + static_cast<std::ptrdiff_t>(take), cell.end());
  }
  if (out.main_rows.empty() || out.holdout_rows.empty())
    fail(ErrorCode::degenerate_stratum, "a split part would receive zero rows");
  std::sort(out.main_rows.begin(), out.main_rows.end());
  std::sort(out.holdout_rows.begin(), out.holdout_rows.end());
  out.main = ds.subset(out.main_rows);
  out.holdout = ds.subset(out.holdout_rows);
  return out;
}

struct Fold {
  Indices train;
  Indices test;
};

/// Stratified k-fold: each (y,s) cell is shuffled and dealt round-robin, the
/// dealing position carrying over between cells so fold sizes differ by <= 1.
inline std::vector<Fold> kfold(std::span<const int> target, std::span<const int> sensitive,
                               std::size_t k, std::uint64_t seed) {
  require(k >= 2, ErrorCode::invalid_argument, "k must be at least 2");
  require(target.size() >= k, ErrorCode::too_few_rows,
          std::to_string(target.size()) + " rows for " + std::to_string(k) + " folds");
  Rng rng(seed);
  std::vector<Indices> tests(k);
  std::size_t position = 0;
  for (auto& cell : strata(target, sensitive)) {
    rng.shuffle(cell);
    for (auto i : cell) tests[position++ % k].push_back(i);
  }
  std::vector<Fold> folds(k);
  std::vector<std::size_t> owner(target.size());
  for (std::size_t f = 0; f < k; ++f)
    for (auto i : tests[f]) owner[i] = f;
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(tests[f].begin(), tests[f].end());
    folds[f].test = std::move(tests[f]);
    for (std::size_t i = 0; i < target.size(); ++i)
      if (owner[i] != f) folds[f].train.push_back(i);
  }
  return folds;
}

inline std::vector<Fold> kfold(const Dataset& ds, std::size_t k, std::uint64_t seed) {
  return kfold(ds.target, ds.sensitive, k, seed);
}

// ---------------------------------------------------------------------------
// Planted-bias generator

struct SynthSpec {
  std::size_t n = 1000;
  std::size_t m_z = 2;
  double group_rate = 0.5;          // P(S = 1)
  std::vector<double> mean_shift;   // per feature; feature j = shift_j * (2S-1) + noise
  double label_bias = 0.0;          // direct effect of S on the label log-odds
  std::vector<double> label_weights;
  double noise_sd = 1.0;
  // When > 0, features are rounded to multiples of this step (discrete
  // features, as in survey data). 0 keeps them continuous.
  double quantize_step = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1, ErrorCode::invalid_argument, "n must be positive");
    require(group_rate > 0.0 && group_rate < 1.0, ErrorCode::invalid_argument,
            "group rate must lie in (0,1)");
    require(noise_sd > 0.0, ErrorCode::invalid_argument, "noise sd must be positive");
    require(quantize_step >= 0.0, ErrorCode::invalid_argument, "quantize step must be >= 0");
    require(mean_shift.size() == m_z, ErrorCode::dimension_mismatch, "mean_shift length != m_z");
    require(label_weights.size() == m_z, ErrorCode::dimension_mismatch,
            "label_weights length != m_z");
  }
};

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto m = static_cast<Eigen::Index>(spec.m_z);
  ds.features.resize(n, m);
  ds.sensitive.resize(spec.n);
  ds.target.resize(spec.n);
  ds.row_ids.resize(spec.n);
  for (std::size_t j = 0; j < spec.m_z; ++j) ds.feature_names.push_back("z" + std::to_string(j));

  for (Eigen::Index i = 0; i < n; ++i) {
    const int s = rng.bernoulli(spec.group_rate) ? 1 : 0;
    const double sign = 2.0 * s - 1.0;
    double logit = spec.label_bias * sign;
    for (Eigen::Index j = 0; j < m; ++j) {
      double z = spec.mean_shift[static_cast<std::size_t>(j)] * sign + spec.noise_sd * rng.normal();
      if (spec.quantize_step > 0.0) z = spec.quantize_step * std::round(z / spec.quantize_step);
      ds.features(i, j) = z;
      logit += spec.label_weights[static_cast<std::size_t>(j)] * z;
    }
    const auto row = static_cast<std::size_t>(i);
    ds.sensitive[row] = s;
    ds.target[row] = rng.bernoulli(sigmoid(logit)) ? 1 : 0;
    ds.row_ids[row] = std::to_string(row);
  }
  return ds;
}

}  // namespace fairctx
