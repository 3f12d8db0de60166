#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fair_context/error.hpp"
#include "fair_context/experiment.hpp"
#include "fair_context/report.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Flag validation failure; reported with exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct DataFlags {
  std::string data;
  std::string target;
  std::string sensitive;
  std::string positive_target = "1";
  std::string positive_sensitive = "1";
  std::string predictor = "knn";
  std::size_t k = 16;
  std::size_t folds = 5;
  std::size_t seeds = 10;
  std::size_t max_context = 10000;
  std::uint64_t seed = 0;
  double holdout = 0.2;
  std::size_t jobs = 0;
  std::size_t fallback = 0;
  std::string manifest;
};

inline void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.data, "Input CSV (header row required)")->required();
  cmd->add_option("--target", f.target, "Target column")->required();
  cmd->add_option("--sensitive", f.sensitive, "Sensitive-attribute column")->required();
  cmd->add_option("--positive-target", f.positive_target, "Target value mapped to 1");
  cmd->add_option("--positive-sensitive", f.positive_sensitive, "Sensitive value mapped to 1");
  cmd->add_option("--predictor", f.predictor, "knn | logreg | external:<command>");
  cmd->add_option("--k", f.k, "Neighbours for the knn predictor")->check(CLI::PositiveNumber);
  cmd->add_option("--folds", f.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  cmd->add_option("--seeds", f.seeds, "Independent seeds")->check(CLI::PositiveNumber);
  cmd->add_option("--max-context", f.max_context, "Context cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--holdout", f.holdout, "Held-out fraction for the sensitive classifier")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--jobs", f.jobs, "Worker threads (default: FAIR_CONTEXT_JOBS or core count)");
  cmd->add_option("--fallback", f.fallback,
                  "Keep this many lowest-margin rows when uncertain selection is empty (0 = error)");
  cmd->add_option("--manifest", f.manifest, "Run manifest path (default: <out>.manifest.json)");
}

inline RunConfig base_config(const DataFlags& f) {
  RunConfig cfg;
  try {
    cfg.predictor = PredictorSpec::parse(f.predictor);
  } catch (const Error& e) {
    throw UsageError("--predictor: " + e.detail());
  }
  cfg.predictor.k = f.k;
  cfg.n_folds = f.folds;
  cfg.n_seeds = f.seeds;
  cfg.max_context = f.max_context;
  cfg.base_seed = f.seed;
  cfg.holdout_fraction = f.holdout;
  if (!(f.holdout > 0.0 && f.holdout < 1.0)) throw UsageError("--holdout must lie in (0,1)");
  cfg.jobs = f.jobs > 0 ? f.jobs : default_jobs();
  cfg.uncertain_fallback = f.fallback;
  return cfg;
}

inline Method method_flag(const std::string& name, const char* flag) {
  try {
    return parse_method(name);
  } catch (const Error&) {
    throw UsageError(std::string(flag) + ": unknown method '" + name + "'");
  }
}

inline Dataset load(const DataFlags& f, std::ostream& out) {
  auto loaded = load_csv(f.data, {f.target, f.sensitive, f.positive_target, f.positive_sensitive});
  out << "loaded " << loaded.dataset.size() << " rows, " << loaded.dataset.n_features()
      << " features (" << loaded.dropped_rows << " rows dropped for missing values)\n";
  return std::move(loaded.dataset);
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorCode::io_error, "cannot write " + path);
  file << text;
}

inline std::string manifest_path(const DataFlags& f, const std::string& out) {
  return f.manifest.empty() ? out + ".manifest.json" : f.manifest;
}

inline void write_records(const std::string& path, const std::vector<EvalRecord>& records, bool timing) {
  std::ostringstream buffer;
  write_jsonl(buffer, records, timing);
  write_text(path, buffer.str());
}

/// Applies --epsilon / --alpha to a method, rejecting mismatches.
inline GridPoint point_for(Method method, std::optional<double> epsilon, std::optional<double> alpha,
                           bool strict, std::ostream& out) {
  GridPoint p{method, std::nullopt, std::nullopt};
  if (is_uncertain(method)) {
    p.epsilon = epsilon;
    if (!epsilon) out << "epsilon not given for " << to_string(method) << "; using default " << kDefaultEpsilon << "\n";
  } else if (strict && epsilon) {
    throw UsageError("--epsilon is only valid with uncertain methods, not " + to_string(method));
  }
  if (is_cr(method)) {
    p.alpha = alpha;
    if (!alpha) out << "alpha not given for " << to_string(method) << "; using default " << kDefaultAlpha << "\n";
  } else if (strict && alpha) {
    throw UsageError("--alpha is only valid with cr methods, not " + to_string(method));
  }
  if (p.epsilon && !(*p.epsilon > 0.0 && *p.epsilon < 1.0)) throw UsageError("--epsilon must lie in (0,1)");
  if (p.alpha && !(*p.alpha >= 0.0 && *p.alpha <= 1.0)) throw UsageError("--alpha must lie in [0,1]");
  return p;
}

}  // namespace detail

/// Parses and runs one subcommand. Exit codes: 0 success, 1 usage error,
/// 2 runtime error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Fairness interventions for in-context learning on tabular data"};
  app.require_subcommand(1);

  // evaluate
  detail::DataFlags eval_flags;
  std::string eval_method, eval_out, eval_summary;
  std::optional<double> eval_epsilon, eval_alpha;
  bool eval_timing = false;
  auto* evaluate = app.add_subcommand("evaluate", "Run the holdout + k-fold pipeline for one method");
  detail::add_data_flags(evaluate, eval_flags);
  evaluate->add_option("--method", eval_method,
                       "vanilla | balanced | cr_s1 | cr_s2 | uncertain_lr | uncertain_strong")->required();
  evaluate->add_option("--epsilon", eval_epsilon, "Conformal miscoverage (uncertain methods)");
  evaluate->add_option("--alpha", eval_alpha, "Correlation-removal strength (cr methods)");
  evaluate->add_option("--out", eval_out, "Records output (.jsonl)")->required();
  evaluate->add_option("--summary", eval_summary, "Optional summary CSV");
  evaluate->add_flag("--timing", eval_timing, "Include wall_time_ms in records");

  // sweep
  detail::DataFlags sweep_flags;
  std::vector<double> eps_grid, alpha_grid;
  std::vector<std::string> sweep_methods;
  std::string sweep_out, sweep_pareto, sweep_axis = "dp";
  auto* sweep_cmd = app.add_subcommand("sweep", "Epsilon / alpha grid with Pareto fronts");
  detail::add_data_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--epsilon-grid", eps_grid, "Comma-separated epsilon values")->delimiter(',');
  sweep_cmd->add_option("--alpha-grid", alpha_grid, "Comma-separated alpha values")->delimiter(',');
  sweep_cmd->add_option("--methods", sweep_methods,
                        "Methods (default: uncertain_lr for an epsilon grid, cr_s1 for an alpha grid)")
      ->delimiter(',');
  sweep_cmd->add_option("--out", sweep_out, "Records output (.jsonl)")->required();
  sweep_cmd->add_option("--pareto", sweep_pareto, "Pareto CSV (default: <out dir>/pareto.csv)");
  sweep_cmd->add_option("--axis", sweep_axis, "Unfairness axis: dp | eop | eod");

  // reconstruct
  detail::DataFlags rec_flags;
  std::vector<std::string> rec_methods;
  std::optional<double> rec_epsilon, rec_alpha;
  std::string rec_out, rec_records;
  auto* reconstruct = app.add_subcommand("reconstruct", "Predict the sensitive attribute after each intervention");
  detail::add_data_flags(reconstruct, rec_flags);
  reconstruct->add_option("--methods", rec_methods, "Methods to probe")->delimiter(',')->required();
  reconstruct->add_option("--epsilon", rec_epsilon, "Epsilon for uncertain methods");
  reconstruct->add_option("--alpha", rec_alpha, "Alpha for cr methods");
  reconstruct->add_option("--out", rec_out, "Output CSV (method x accuracy, f1)")->required();
  reconstruct->add_option("--records", rec_records, "Optional per-cell records (.jsonl)");

  // ablate
  detail::DataFlags abl_flags;
  std::vector<std::size_t> abl_sizes = default_ablation_sizes();
  std::vector<std::string> abl_methods{"vanilla"};
  std::optional<double> abl_epsilon, abl_alpha;
  std::string abl_out, abl_records;
  auto* ablate = app.add_subcommand("ablate", "Context-size ablation");
  detail::add_data_flags(ablate, abl_flags);
  ablate->add_option("--sizes", abl_sizes, "Strictly ascending context sizes")->delimiter(',');
  ablate->add_option("--methods", abl_methods, "Methods")->delimiter(',');
  ablate->add_option("--epsilon", abl_epsilon, "Epsilon for uncertain methods");
  ablate->add_option("--alpha", abl_alpha, "Alpha for cr methods");
  ablate->add_option("--out", abl_out, "Long-format CSV")->required();
  ablate->add_option("--records", abl_records, "Optional per-cell records (.jsonl)");

  // synth
  SynthSpec synth_spec;
  std::vector<double> beta_x{1.0};
  std::vector<double> label_weights;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a planted-bias synthetic dataset");
  synth->add_option("--n", synth_spec.n, "Rows")->check(CLI::PositiveNumber);
  synth->add_option("--m-z", synth_spec.m_z, "Non-sensitive features")->check(CLI::PositiveNumber);
  synth->add_option("--pi", synth_spec.group_rate, "P(S=1)");
  synth->add_option("--beta-x", beta_x, "Feature shift by group (one value or one per feature)")->delimiter(',');
  synth->add_option("--beta-s", synth_spec.label_bias, "Direct effect of S on the label log-odds");
  synth->add_option("--label-weights", label_weights, "Label weights (default zeros)")->delimiter(',');
  synth->add_option("--noise-sd", synth_spec.noise_sd, "Feature noise sd (> 0)");
  synth->add_option("--quantize", synth_spec.quantize_step, "Round features to this step (0 = continuous)");
  synth->add_option("--seed", synth_spec.seed, "Seed");
  synth->add_option("--out", synth_out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*evaluate) {
      const Method method = detail::method_flag(eval_method, "--method");
      auto cfg = with_point(detail::base_config(eval_flags),
                            detail::point_for(method, eval_epsilon, eval_alpha, true, out));
      const Dataset ds = detail::load(eval_flags, out);
      const auto records = run_pipeline(ds, cfg);
      detail::write_records(eval_out, records, eval_timing);
      const auto rows = aggregate(records);
      if (!eval_summary.empty()) {
        std::ostringstream csv_out;
        write_summary_csv(csv_out, rows);
        detail::write_text(eval_summary, csv_out.str());
      }
      detail::write_text(detail::manifest_path(eval_flags, eval_out),
                         make_manifest(ds, cfg, "evaluate", {{"records", records.size()}}).dump(2) + "\n");
      out << records.size() << " records written to " << eval_out << "\n" << format_summary(rows);
      return kExitOk;
    }

    if (*sweep_cmd) {
      if (eps_grid.empty() && alpha_grid.empty())
        throw UsageError("empty grid: give --epsilon-grid and/or --alpha-grid");
      if (sweep_methods.empty()) {
        if (!eps_grid.empty()) sweep_methods.push_back("uncertain_lr");
        if (!alpha_grid.empty()) sweep_methods.push_back("cr_s1");
      }
      if (!is_fairness_metric(sweep_axis)) throw UsageError("--axis must be dp, eop or eod");
      std::vector<GridPoint> grid;
      for (const auto& name : sweep_methods) {
        const Method m = detail::method_flag(name, "--methods");
        if (is_uncertain(m)) {
          if (eps_grid.empty()) throw UsageError("--epsilon-grid required for " + name);
          for (double e : eps_grid) grid.push_back(detail::point_for(m, e, std::nullopt, true, out));
        } else if (is_cr(m)) {
          if (alpha_grid.empty()) throw UsageError("--alpha-grid required for " + name);
          for (double a : alpha_grid) grid.push_back(detail::point_for(m, std::nullopt, a, true, out));
        } else {
          grid.push_back({m, std::nullopt, std::nullopt});
        }
      }
      const auto cfg = detail::base_config(sweep_flags);
      const Dataset ds = detail::load(sweep_flags, out);
      const auto result = sweep(ds, cfg, grid);
      detail::write_records(sweep_out, result.records, false);

      if (sweep_pareto.empty()) {
        const auto slash = sweep_out.find_last_of('/');
        sweep_pareto = (slash == std::string::npos ? std::string() : sweep_out.substr(0, slash + 1)) + "pareto.csv";
      }
      std::ostringstream pareto_csv;
      csv::write_row(pareto_csv, {"method", "epsilon", "alpha", "accuracy", "unfairness", "unfairness_metric", "on_front"});
      if (!result.records.empty()) {
        const auto points = pareto_points(result.records, sweep_axis);
        const auto front = pareto_front(points);
        for (std::size_t i = 0; i < points.size(); ++i) {
          const auto& c = points[i].config;
          csv::write_row(pareto_csv, {c["method"].get<std::string>(),
                                      c["epsilon"].is_null() ? "" : csv::format_number(c["epsilon"].get<double>()),
                                      c["alpha"].is_null() ? "" : csv::format_number(c["alpha"].get<double>()),
                                      csv::format_number(points[i].accuracy), csv::format_number(points[i].unfairness),
                                      sweep_axis, front.on_front[i] ? "1" : "0"});
        }
      }
      detail::write_text(sweep_pareto, pareto_csv.str());

      nlohmann::ordered_json grid_json = nlohmann::ordered_json::array();
      for (const auto& p : grid) grid_json.push_back(p.to_json());
      nlohmann::ordered_json failures = nlohmann::ordered_json::array();
      for (const auto& f : result.failures) failures.push_back({{"point", f.point.to_json()}, {"error", f.message}});
      detail::write_text(detail::manifest_path(sweep_flags, sweep_out),
                         make_manifest(ds, cfg, "sweep",
                                       {{"grid", grid_json}, {"failures", failures}, {"records", result.records.size()}})
                                 .dump(2) + "\n");
      out << grid.size() << " grid points, " << result.records.size() << " records, "
          << result.failures.size() << " failed points\n";
      for (const auto& f : result.failures) err << "grid point failed: " << f.message << "\n";
      if (!result.records.empty()) out << format_summary(aggregate(result.records));
      return kExitOk;
    }

    if (*reconstruct) {
      std::vector<GridPoint> points;
      for (const auto& name : rec_methods)
        points.push_back(detail::point_for(detail::method_flag(name, "--methods"), rec_epsilon, rec_alpha, false, out));
      const auto cfg = detail::base_config(rec_flags);
      const Dataset ds = detail::load(rec_flags, out);
      std::ostringstream table;
      csv::write_row(table, {"method", "epsilon", "alpha", "accuracy", "accuracy_std", "f1", "f1_std", "n_cells"});
      std::vector<EvalRecord> all;
      for (const auto& p : points) {
        const auto probe = reconstruction_probe(ds, with_point(cfg, p));
        csv::write_row(table, {to_string(p.method), csv::format_optional(p.epsilon), csv::format_optional(p.alpha),
                               csv::format_number(probe.accuracy), csv::format_number(probe.accuracy_std),
                               csv::format_number(probe.f1), csv::format_number(probe.f1_std),
                               std::to_string(probe.records.size())});
        out << to_string(p.method) << ": sensitive-attribute accuracy " << csv::format_fixed(100 * probe.accuracy, 2)
            << " ± " << csv::format_fixed(100 * probe.accuracy_std, 2) << ", F1 " << csv::format_fixed(100 * probe.f1, 2)
            << " ± " << csv::format_fixed(100 * probe.f1_std, 2) << " (x100)\n";
        all.insert(all.end(), probe.records.begin(), probe.records.end());
      }
      detail::write_text(rec_out, table.str());
      if (!rec_records.empty()) detail::write_records(rec_records, all, false);
      nlohmann::ordered_json methods = nlohmann::ordered_json::array();
      for (const auto& p : points) methods.push_back(p.to_json());
      detail::write_text(detail::manifest_path(rec_flags, rec_out),
                         make_manifest(ds, cfg, "reconstruct", {{"methods", methods}}).dump(2) + "\n");
      return kExitOk;
    }

    if (*ablate) {
      for (std::size_t i = 0; i < abl_sizes.size(); ++i)
        if (abl_sizes[i] == 0 || (i > 0 && abl_sizes[i] <= abl_sizes[i - 1]))
          throw UsageError("--sizes must be positive and strictly ascending");
      if (abl_sizes.empty()) throw UsageError("--sizes is empty");
      std::vector<GridPoint> points;
      for (const auto& name : abl_methods)
        points.push_back(detail::point_for(detail::method_flag(name, "--methods"), abl_epsilon, abl_alpha, false, out));
      const auto cfg = detail::base_config(abl_flags);
      const Dataset ds = detail::load(abl_flags, out);
      const auto records = context_size_ablation(ds, abl_sizes, points, cfg);

      std::ostringstream table;
      csv::write_row(table, {"method", "epsilon", "alpha", "requested_size", "achieved_size_mean", "shortfall_cells",
                             "metric", "mean", "std", "n_cells", "n_undefined"});
      const auto rows = aggregate(records);
      for (const auto& row : rows) {
        if (row.metric == "context_size") continue;
        std::size_t shortfall = 0;
        double achieved = 0.0;
        std::size_t members = 0;
        for (const auto& r : records)
          if (r.method == row.method && r.epsilon == row.epsilon && r.alpha == row.alpha &&
              r.requested_size == row.requested_size) {
            shortfall += r.size_shortfall;
            achieved += static_cast<double>(r.context_size);
            ++members;
          }
        csv::write_row(table, {to_string(row.method), csv::format_optional(row.epsilon), csv::format_optional(row.alpha),
                               std::to_string(*row.requested_size), csv::format_number(achieved / static_cast<double>(members)),
                               std::to_string(shortfall), row.metric, csv::format_optional(row.mean),
                               csv::format_optional(row.std), std::to_string(row.n_cells), std::to_string(row.n_undefined)});
      }
      detail::write_text(abl_out, table.str());
      if (!abl_records.empty()) detail::write_records(abl_records, records, false);
      detail::write_text(detail::manifest_path(abl_flags, abl_out),
                         make_manifest(ds, cfg, "ablate", {{"sizes", abl_sizes}}).dump(2) + "\n");
      out << format_summary(rows);
      return kExitOk;
    }

    if (*synth) {
      if (!(synth_spec.noise_sd > 0.0)) throw UsageError("--noise-sd must be > 0");
      if (!(synth_spec.group_rate > 0.0 && synth_spec.group_rate < 1.0)) throw UsageError("--pi must lie in (0,1)");
      if (synth_spec.quantize_step < 0.0) throw UsageError("--quantize must be >= 0");
      if (beta_x.size() == 1) beta_x.assign(synth_spec.m_z, beta_x.front());
      if (label_weights.empty()) label_weights.assign(synth_spec.m_z, 0.0);
      if (beta_x.size() != synth_spec.m_z) throw UsageError("--beta-x needs 1 or m-z values");
      if (label_weights.size() != synth_spec.m_z) throw UsageError("--label-weights needs m-z values");
      synth_spec.mean_shift = beta_x;
      synth_spec.label_weights = label_weights;
      const Dataset ds = generate_synthetic(synth_spec);
      std::ostringstream csv_out;
      write_csv(ds, csv_out);
      detail::write_text(synth_out, csv_out.str());
      nlohmann::ordered_json planted{{"n", synth_spec.n},
                                     {"m_z", synth_spec.m_z},
                                     {"pi", synth_spec.group_rate},
                                     {"beta_x", synth_spec.mean_shift},
                                     {"beta_s", synth_spec.label_bias},
                                     {"label_weights", synth_spec.label_weights},
                                     {"noise_sd", synth_spec.noise_sd},
                                     {"quantize", synth_spec.quantize_step},
                                     {"seed", synth_spec.seed}};
      out << planted.dump() << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace fairctx::cli
