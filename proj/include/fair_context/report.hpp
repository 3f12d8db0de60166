#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "fair_context/csv.hpp"
#include "fair_context/experiment.hpp"
#include "fair_context/pareto.hpp"
#include "fair_context/random.hpp"

namespace fairctx {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kRecordSchema = "fair-context/record/v1";
inline constexpr const char* kManifestSchema = "fair-context/manifest/v1";

// ---------------------------------------------------------------------------
// Records as JSON Lines

inline nlohmann::ordered_json to_json(const EvalRecord& r, bool include_timing = false) {
  nlohmann::ordered_json j;
  j["schema"] = kRecordSchema;
  j["seed"] = r.seed_index;
  j["fold"] = r.fold_index;
  j["method"] = to_string(r.method);
  j["epsilon"] = json_or_null(r.epsilon);
  j["alpha"] = json_or_null(r.alpha);
  j["target"] = r.target == PredictionTarget::label ? "label" : "sensitive";
  j["context_size"] = r.context_size;
  j["requested_size"] = json_or_null(r.requested_size);
  j["size_shortfall"] = r.size_shortfall;
  j["context_groups"] = {r.context_groups[0], r.context_groups[1]};
  j["tau"] = json_or_null(r.tau);
  j["test_size"] = r.test_size;
  j["accuracy"] = r.accuracy;
  j["f1"] = r.f1;
  j["dp"] = r.dp;
  j["eop"] = r.eop;
  j["eod"] = r.eod;
  j["undefined"] = r.undefined_flags;
  if (include_timing) j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

inline EvalRecord record_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != kRecordSchema)
    fail(ErrorCode::protocol_error, "unsupported record schema");
  auto opt_d = [&](const char* k) -> std::optional<double> {
    return j.at(k).is_null() ? std::nullopt : std::optional<double>(j.at(k).get<double>());
  };
  EvalRecord r;
  r.seed_index = j.at("seed").get<std::size_t>();
  r.fold_index = j.at("fold").get<std::size_t>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.epsilon = opt_d("epsilon");
  r.alpha = opt_d("alpha");
  r.target = j.at("target") == "label" ? PredictionTarget::label : PredictionTarget::sensitive;
  r.context_size = j.at("context_size").get<std::size_t>();
  if (!j.at("requested_size").is_null()) r.requested_size = j.at("requested_size").get<std::size_t>();
  r.size_shortfall = j.at("size_shortfall").get<bool>();
  r.context_groups = {j.at("context_groups")[0].get<std::size_t>(), j.at("context_groups")[1].get<std::size_t>()};
  r.tau = opt_d("tau");
  r.test_size = j.at("test_size").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.dp = j.at("dp").get<double>();
  r.eop = j.at("eop").get<double>();
  r.eod = j.at("eod").get<double>();
  r.undefined_flags = j.at("undefined").get<std::set<std::string>>();
  r.wall_time_ms = j.value("wall_time_ms", 0.0);
  return r;
}

inline void write_jsonl(std::ostream& out, const std::vector<EvalRecord>& records,
                        bool include_timing = false) {
  for (const auto& r : records) out << to_json(r, include_timing).dump() << '\n';
}

inline std::vector<EvalRecord> read_jsonl(std::istream& in) {
  std::vector<EvalRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json(nlohmann::json::parse(line)));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation

inline const std::vector<std::string>& summary_metrics() {
  static const std::vector<std::string> names{"accuracy", "f1", "dp", "eop", "eod", "context_size"};
  return names;
}

inline bool is_fairness_metric(const std::string& m) { return m == "dp" || m == "eop" || m == "eod"; }

inline double metric_value(const EvalRecord& r, const std::string& metric) {
  if (metric == "accuracy") return r.accuracy;
  if (metric == "f1") return r.f1;
  if (metric == "dp") return r.dp;
  if (metric == "eop") return r.eop;
  if (metric == "eod") return r.eod;
  if (metric == "context_size") return static_cast<double>(r.context_size);
  fail(ErrorCode::invalid_argument, "unknown metric " + metric);
}

/// Mean and population std of one metric over the (seed, fold) cells of one
/// configuration. Cells where the metric is undefined are excluded and
/// counted; mean/std are empty when every cell is undefined.
struct SummaryRow {
  Method method = Method::vanilla;
  std::optional<double> epsilon;
  std::optional<double> alpha;
  std::optional<std::size_t> requested_size;
  std::string metric;
  std::optional<double> mean;
  std::optional<double> std;
  std::size_t n_cells = 0;
  std::size_t n_undefined = 0;
};

inline std::vector<SummaryRow> aggregate(const std::vector<EvalRecord>& records) {
  require(!records.empty(), ErrorCode::empty_input, "no records to aggregate");
  using Key = std::tuple<int, int, std::optional<double>, std::optional<double>, std::optional<std::size_t>>;
  std::map<Key, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records)
    groups[{static_cast<int>(r.method), static_cast<int>(r.target), r.epsilon, r.alpha, r.requested_size}]
        .push_back(&r);

  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups) {
    for (const auto& metric : summary_metrics()) {
      SummaryRow row;
      row.method = members.front()->method;
      row.epsilon = members.front()->epsilon;
      row.alpha = members.front()->alpha;
      row.requested_size = members.front()->requested_size;
      row.metric = metric;
      row.n_cells = members.size();
      std::vector<double> values;
      for (const auto* r : members) {
        if (r->undefined_flags.contains(metric))
          ++row.n_undefined;
        else
          values.push_back(metric_value(*r, metric));
      }
      if (!values.empty()) {
        const auto n = static_cast<double>(values.size());
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        row.mean = mean;
        row.std = std::sqrt(var / n);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline const SummaryRow* find_summary(const std::vector<SummaryRow>& rows, Method method,
                                      const std::string& metric) {
  for (const auto& r : rows)
    if (r.method == method && r.metric == metric) return &r;
  return nullptr;
}

/// method, epsilon, alpha, metric, mean, std, n_cells, n_undefined (natural units).
inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  csv::write_row(out, {"method", "epsilon", "alpha", "metric", "mean", "std", "n_cells", "n_undefined"});
  for (const auto& r : rows) {
    csv::write_row(out, {to_string(r.method), csv::format_optional(r.epsilon), csv::format_optional(r.alpha),
                         r.metric, csv::format_optional(r.mean), csv::format_optional(r.std),
                         std::to_string(r.n_cells), std::to_string(r.n_undefined)});
  }
}

/// Human-readable table; fairness metrics are shown x100.
inline std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "method            epsilon  alpha  size   metric        mean ± std           cells  undefined\n";
  for (const auto& r : rows) {
    const double scale = is_fairness_metric(r.metric) ? 100.0 : 1.0;
    const int digits = r.metric == "context_size" ? 1 : (is_fairness_metric(r.metric) ? 2 : 4);
    std::string value = "undefined";
    if (r.mean) value = csv::format_fixed(*r.mean * scale, digits) + " ± " + csv::format_fixed(*r.std * scale, digits);
    const std::string label = r.metric + (is_fairness_metric(r.metric) ? " (x100)" : "");
    char line[256];
    std::snprintf(line, sizeof(line), "%-17s %-8s %-6s %-6s %-13s %-20s %-6zu %zu\n",
                  to_string(r.method).c_str(), r.epsilon ? csv::format_number(*r.epsilon).c_str() : "-",
                  r.alpha ? csv::format_number(*r.alpha).c_str() : "-",
                  r.requested_size ? std::to_string(*r.requested_size).c_str() : "-", label.c_str(),
                  value.c_str(), r.n_cells, r.n_undefined);
    out << line;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Pareto points from records

/// One point per (method, epsilon, alpha): mean accuracy against mean
/// unfairness on the chosen axis ("dp", "eop" or "eod").
inline std::vector<ParetoPoint> pareto_points(const std::vector<EvalRecord>& records,
                                              const std::string& axis) {
  require(is_fairness_metric(axis), ErrorCode::invalid_argument, "unknown unfairness axis " + axis);
  const auto rows = aggregate(records);
  std::vector<ParetoPoint> points;
  for (const auto& row : rows) {
    if (row.metric != axis || !row.mean) continue;
    for (const auto& acc : rows) {
      if (acc.metric != "accuracy" || acc.method != row.method || acc.epsilon != row.epsilon ||
          acc.alpha != row.alpha || acc.requested_size != row.requested_size)
        continue;
      ParetoPoint p;
      p.accuracy = *acc.mean;
      p.unfairness = *row.mean;
      p.config = {{"method", to_string(row.method)},
                  {"epsilon", json_or_null(row.epsilon)},
                  {"alpha", json_or_null(row.alpha)}};
      points.push_back(std::move(p));
      break;
    }
  }
  return points;
}

// ---------------------------------------------------------------------------
// Manifest

/// FNV-1a over the dataset's numeric content and labels.
inline std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      const double v = ds.features(i, j);
      mix(&v, sizeof v);
    }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const unsigned char pair[2] = {static_cast<unsigned char>(ds.sensitive[i]),
                                   static_cast<unsigned char>(ds.target[i])};
    mix(pair, 2);
  }
  for (const auto& name : ds.feature_names) mix(name.data(), name.size());
  return h;
}

inline nlohmann::ordered_json make_manifest(const Dataset& ds, const RunConfig& cfg,
                                            const std::string& command,
                                            nlohmann::ordered_json extra = nlohmann::ordered_json::object()) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(dataset_hash(ds)));
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < cfg.n_seeds; ++i) seeds.push_back(stream_seed(cfg.base_seed, i, 0));
  nlohmann::ordered_json m;
  m["schema"] = kManifestSchema;
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = cfg.to_json();
  m["dataset"] = {{"rows", ds.size()}, {"features", ds.n_features()}, {"content_hash", hash}};
  m["rng"] = kRngAlgorithm;
  m["seed_streams"] = seeds;
  for (auto& [k, v] : extra.items()) m[k] = v;
  return m;
}

}  // namespace fairctx
