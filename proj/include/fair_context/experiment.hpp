#pragma once

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fair_context/adapter_client.hpp"
#include "fair_context/conformal.hpp"
#include "fair_context/correlation_remover.hpp"
#include "fair_context/error.hpp"
#include "fair_context/metrics.hpp"
#include "fair_context/parallel.hpp"
#include "fair_context/predictors.hpp"
#include "fair_context/random.hpp"
#include "fair_context/selection.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx {

template <typename T>
nlohmann::ordered_json json_or_null(const std::optional<T>& value) {
  return value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
}

enum class Method { vanilla, balanced, cr_s1, cr_s2, uncertain_lr, uncertain_strong };

inline constexpr double kDefaultEpsilon = 0.05;
inline constexpr double kDefaultAlpha = 1.0;

inline std::string to_string(Method m) {
  switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::balanced: return "balanced";
    case Method::cr_s1: return "cr_s1";
    case Method::cr_s2: return "cr_s2";
    case Method::uncertain_lr: return "uncertain_lr";
    case Method::uncertain_strong: return "uncertain_strong";
  }
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (auto m : {Method::vanilla, Method::balanced, Method::cr_s1, Method::cr_s2,
                 Method::uncertain_lr, Method::uncertain_strong})
    if (to_string(m) == name) return m;
  fail(ErrorCode::invalid_argument, "unknown method '" + name + "'");
}

inline bool is_cr(Method m) { return m == Method::cr_s1 || m == Method::cr_s2; }
inline bool is_uncertain(Method m) {
  return m == Method::uncertain_lr || m == Method::uncertain_strong;
}

struct PredictorSpec {
  enum class Kind { knn, logreg, external };
  Kind kind = Kind::knn;
  std::size_t k = 16;
  std::string command;  // external only
  LogRegConfig logreg;
  AdapterOptions adapter;

  /// "knn", "logreg" or "external:<command>".
  static PredictorSpec parse(const std::string& text) {
    PredictorSpec spec;
    if (text == "knn") return spec;
    if (text == "logreg") {
      spec.kind = Kind::logreg;
      return spec;
    }
    if (text.rfind("external:", 0) == 0 && text.size() > 9) {
      spec.kind = Kind::external;
      spec.command = text.substr(9);
      return spec;
    }
    fail(ErrorCode::invalid_argument, "unknown predictor '" + text + "'");
  }

  std::string describe() const {
    switch (kind) {
      case Kind::knn: return "knn";
      case Kind::logreg: return "logreg";
      case Kind::external: return "external:" + command;
    }
    return "?";
  }
};

inline std::shared_ptr<InContextPredictor> make_predictor(const PredictorSpec& spec) {
  switch (spec.kind) {
    case PredictorSpec::Kind::knn: return std::make_shared<KnnPredictor>(spec.k);
    case PredictorSpec::Kind::logreg: return std::make_shared<LogRegPredictor>(spec.logreg);
    case PredictorSpec::Kind::external:
      return std::make_shared<ExternalPredictor>(spec.command, spec.adapter);
  }
  fail(ErrorCode::invalid_argument, "predictor kind");
}

/// What the in-context predictor is asked to predict.
enum class PredictionTarget { label, sensitive };

struct RunConfig {
  Method method = Method::vanilla;
  std::optional<double> epsilon;  // uncertain methods only
  std::optional<double> alpha;    // CR methods only
  PredictorSpec predictor;
  std::size_t n_folds = 5;
  std::size_t n_seeds = 10;
  double holdout_fraction = 0.2;
  std::size_t max_context = 10000;
  std::uint64_t base_seed = 0;
  std::size_t jobs = 1;
  // Rows kept by the margin fallback when uncertain selection is empty; 0
  // makes an empty selection an error.
  std::size_t uncertain_fallback = 0;
  PredictionTarget target = PredictionTarget::label;
  // Post-selection cap used by the context-size ablation.
  std::optional<std::size_t> context_size;

  double effective_epsilon() const { return epsilon.value_or(kDefaultEpsilon); }
  double effective_alpha() const { return alpha.value_or(kDefaultAlpha); }

  void validate() const {
    if (epsilon && !is_uncertain(method))
      fail(ErrorCode::invalid_argument, "epsilon is only valid with uncertain methods, not " + to_string(method));
    if (alpha && !is_cr(method))
      fail(ErrorCode::invalid_argument, "alpha is only valid with cr methods, not " + to_string(method));
    if (is_uncertain(method)) {
      const double e = effective_epsilon();
      require(e > 0.0 && e < 1.0, ErrorCode::invalid_argument, "epsilon must lie in (0,1)");
    }
    if (is_cr(method)) {
      const double a = effective_alpha();
      require(a >= 0.0 && a <= 1.0, ErrorCode::invalid_argument, "alpha must lie in [0,1]");
    }
    require(n_folds >= 2, ErrorCode::invalid_argument, "need at least 2 folds");
    require(n_seeds >= 1, ErrorCode::invalid_argument, "need at least 1 seed");
    require(holdout_fraction > 0.0 && holdout_fraction < 1.0, ErrorCode::invalid_argument,
            "holdout fraction must lie in (0,1)");
    require(max_context >= 1, ErrorCode::invalid_argument, "max_context must be >= 1");
    require(!context_size || *context_size >= 1, ErrorCode::invalid_argument,
            "context size must be >= 1");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["method"] = to_string(method);
    j["epsilon"] = json_or_null(is_uncertain(method) ? std::optional(effective_epsilon()) : std::nullopt);
    j["alpha"] = json_or_null(is_cr(method) ? std::optional(effective_alpha()) : std::nullopt);
    j["predictor"] = predictor.describe();
    j["knn_k"] = predictor.k;
    j["n_folds"] = n_folds;
    j["n_seeds"] = n_seeds;
    j["holdout_fraction"] = holdout_fraction;
    j["max_context"] = max_context;
    j["base_seed"] = base_seed;
    j["uncertain_fallback"] = uncertain_fallback;
    j["target"] = target == PredictionTarget::label ? "label" : "sensitive";
    j["context_size"] = json_or_null(context_size);
    return j;
  }
};

/// One (seed, fold) evaluation cell.
struct EvalRecord {
  std::size_t seed_index = 0;
  std::size_t fold_index = 0;
  Method method = Method::vanilla;
  std::optional<double> epsilon;
  std::optional<double> alpha;
  PredictionTarget target = PredictionTarget::label;
  std::size_t context_size = 0;
  std::optional<std::size_t> requested_size;
  bool size_shortfall = false;  // ablation asked for more rows than were selected
  std::array<std::size_t, 2> context_groups{};
  std::optional<double> tau;
  std::size_t test_size = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double dp = 0.0;
  double eop = 0.0;
  double eod = 0.0;
  std::set<std::string> undefined_flags;
  double wall_time_ms = 0.0;
};

/// Row sets used by one seed, in original dataset indices.
struct SeedTrace {
  Indices main_rows;
  Indices holdout_rows;
  Indices proper_rows;
  Indices calibration_rows;
  std::vector<Fold> folds;
  std::vector<Indices> context_rows;
};

struct PipelineTrace {
  std::vector<SeedTrace> seeds;
};

namespace detail {

inline Indices map_rows(const Indices& parent, const Indices& local) {
  Indices out;
  out.reserve(local.size());
  for (auto i : local) out.push_back(parent[i]);
  return out;
}

struct SeedState {
  HoldoutSplit split;
  std::vector<Fold> folds;
  Vector p_main;  // P(S=1) for main rows, uncertain methods only
  double tau = 1.0;
  std::size_t n_calib = 0;
  Indices proper_rows;
  Indices calibration_rows;
};

class WorkerPredictors {
 public:
  WorkerPredictors(const PredictorSpec& spec, std::size_t workers)
      : spec_(spec), main_(workers), strong_(workers) {}

  std::shared_ptr<InContextPredictor> main(std::size_t w) {
    if (!main_[w]) main_[w] = make_predictor(spec_);
    return main_[w];
  }

  /// Classifier backbone for uncertain_strong: the external adapter when one
  /// is configured, else knn.
  std::shared_ptr<InContextPredictor> strong(std::size_t w) {
    if (spec_.kind == PredictorSpec::Kind::external) return main(w);
    if (!strong_[w]) strong_[w] = std::make_shared<KnnPredictor>(spec_.k);
    return strong_[w];
  }

 private:
  PredictorSpec spec_;
  std::vector<std::shared_ptr<InContextPredictor>> main_;
  std::vector<std::shared_ptr<InContextPredictor>> strong_;
};

inline SeedState prepare_seed(const Dataset& ds, const RunConfig& cfg, std::size_t seed_index,
                              WorkerPredictors& predictors, std::size_t worker) {
  const auto stream = stream_seed(cfg.base_seed, seed_index, 0);
  SeedState st;
  st.split = holdout_split(ds, cfg.holdout_fraction, purpose_seed(stream, Purpose::holdout));
  st.folds = kfold(st.split.main, cfg.n_folds, purpose_seed(stream, Purpose::kfold));
  if (!is_uncertain(cfg.method)) return st;

  auto split = holdout_split(st.split.holdout, 0.5, purpose_seed(stream, Purpose::calibration_split));
  st.proper_rows = map_rows(st.split.holdout_rows, split.main_rows);
  st.calibration_rows = map_rows(st.split.holdout_rows, split.holdout_rows);
  const Dataset& proper = split.main;
  const Dataset& calib = split.holdout;

  std::shared_ptr<const ProbClassifier> classifier;
  if (cfg.method == Method::uncertain_lr) {
    classifier = LogRegClassifier::fit(proper.features, proper.sensitive);
  } else {
    classifier = std::make_shared<InContextClassifier>(predictors.strong(worker), proper.features,
                                                       proper.sensitive);
  }
  const auto model = calibrate(classifier, calib.features, calib.sensitive, cfg.effective_epsilon());
  st.tau = model.tau;
  st.n_calib = model.n_calib;
  st.p_main = classifier->predict_proba(st.split.main.features);
  return st;
}

inline EvalRecord run_cell(const RunConfig& cfg, const SeedState& st, std::size_t seed_index,
                           std::size_t fold_index, InContextPredictor& predictor,
                           Indices* context_rows_out) {
  const auto started = std::chrono::steady_clock::now();
  const Dataset& main = st.split.main;
  const Fold& fold = st.folds[fold_index];
  const auto stream = stream_seed(cfg.base_seed, seed_index, fold_index);
  const Labels& labels = cfg.target == PredictionTarget::label ? main.target : main.sensitive;

  SelectionResult sel;
  switch (cfg.method) {
    case Method::balanced:
      sel = select_balanced(select_labels(main.sensitive, fold.train), std::nullopt,
                            purpose_seed(stream, Purpose::balanced));
      break;
    case Method::uncertain_lr:
    case Method::uncertain_strong: {
      Vector p_train(static_cast<Eigen::Index>(fold.train.size()));
      for (std::size_t r = 0; r < fold.train.size(); ++r)
        p_train(static_cast<Eigen::Index>(r)) = st.p_main(static_cast<Eigen::Index>(fold.train[r]));
      sel = select_uncertain(p_train, st.tau, cfg.effective_epsilon(), cfg.uncertain_fallback);
      break;
    }
    default:
      sel = select_all(fold.train.size());
  }

  std::size_t cap = cfg.max_context;
  if (cfg.context_size) cap = std::min(cap, *cfg.context_size);
  if (auto limit = predictor.max_context()) cap = std::min(cap, *limit);
  const std::size_t selected = sel.indices.size();
  sel = cap_random(std::move(sel), cap, purpose_seed(stream, Purpose::cap));

  const Indices context = map_rows(fold.train, sel.indices);
  Matrix context_x = select_rows(main.features, context);
  Matrix query_x = select_rows(main.features, fold.test);
  const Labels context_s = select_labels(main.sensitive, context);
  const Labels test_s = select_labels(main.sensitive, fold.test);

  if (is_cr(cfg.method)) {
    const auto model = cr_fit(select_rows(main.features, fold.train),
                              select_labels(main.sensitive, fold.train), cfg.effective_alpha(),
                              cfg.method == Method::cr_s1 ? CrMode::s1 : CrMode::s2);
    context_x = cr_transform(model, context_x, context_s);
    if (model.mode == CrMode::s1) query_x = cr_transform(model, query_x, test_s);
  }

  const Labels context_y = select_labels(labels, context);
  const Labels test_y = select_labels(labels, fold.test);
  const Labels pred = threshold_labels(predictor.predict_proba(context_x, context_y, query_x));
  const auto report = evaluate(pred, test_y, test_s);

  EvalRecord rec;
  rec.seed_index = seed_index;
  rec.fold_index = fold_index;
  rec.method = cfg.method;
  if (is_uncertain(cfg.method)) {
    rec.epsilon = cfg.effective_epsilon();
    rec.tau = st.tau;
  }
  if (is_cr(cfg.method)) rec.alpha = cfg.effective_alpha();
  rec.target = cfg.target;
  rec.context_size = context.size();
  rec.requested_size = cfg.context_size;
  rec.size_shortfall = cfg.context_size && selected < *cfg.context_size;
  for (int s : context_s) ++rec.context_groups[static_cast<std::size_t>(s)];
  rec.test_size = fold.test.size();
  rec.accuracy = report.accuracy;
  rec.f1 = report.f1;
  rec.dp = report.dp;
  rec.eop = report.eop;
  rec.eod = report.eod;
  rec.undefined_flags = report.undefined;
  rec.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (context_rows_out) *context_rows_out = context;
  return rec;
}

}  // namespace detail

/// Holdout / k-fold evaluation of one method: per seed, a stratified holdout
/// trains and calibrates the sensitive-attribute classifier (uncertain
/// methods); the rest is split into folds, each fold's training rows provide
/// the demonstrations and its test rows are predicted. One record per
/// (seed, fold), sorted by seed then fold.
inline std::vector<EvalRecord> run_pipeline(const Dataset& ds, const RunConfig& cfg,
                                            PipelineTrace* trace = nullptr) {
  cfg.validate();
  ds.validate();
  const std::size_t jobs = std::max<std::size_t>(cfg.jobs, 1);
  detail::WorkerPredictors predictors(cfg.predictor, jobs);

  std::vector<detail::SeedState> states(cfg.n_seeds);
  parallel_for(cfg.n_seeds, jobs, [&](std::size_t i, std::size_t w) {
    try {
      states[i] = detail::prepare_seed(ds, cfg, i, predictors, w);
    } catch (const Error& e) {
      throw e.annotated("seed " + std::to_string(i));
    }
  });

  const std::size_t cells = cfg.n_seeds * cfg.n_folds;
  std::vector<EvalRecord> records(cells);
  std::vector<Indices> contexts(trace ? cells : 0);
  parallel_for(cells, jobs, [&](std::size_t c, std::size_t w) {
    const std::size_t i = c / cfg.n_folds;
    const std::size_t f = c % cfg.n_folds;
    try {
      records[c] = detail::run_cell(cfg, states[i], i, f, *predictors.main(w),
                                    trace ? &contexts[c] : nullptr);
    } catch (const Error& e) {
      throw e.annotated("seed " + std::to_string(i) + ", fold " + std::to_string(f));
    }
  });

  if (trace) {
    trace->seeds.clear();
    for (std::size_t i = 0; i < cfg.n_seeds; ++i) {
      const auto& st = states[i];
      SeedTrace t;
      t.main_rows = st.split.main_rows;
      t.holdout_rows = st.split.holdout_rows;
      t.proper_rows = st.proper_rows;
      t.calibration_rows = st.calibration_rows;
      for (std::size_t f = 0; f < cfg.n_folds; ++f) {
        t.folds.push_back({detail::map_rows(st.split.main_rows, st.folds[f].train),
                           detail::map_rows(st.split.main_rows, st.folds[f].test)});
        t.context_rows.push_back(detail::map_rows(st.split.main_rows, contexts[i * cfg.n_folds + f]));
      }
      trace->seeds.push_back(std::move(t));
    }
  }
  return records;
}

// ---------------------------------------------------------------------------
// Sweeps, probes and ablations

struct GridPoint {
  Method method = Method::vanilla;
  std::optional<double> epsilon;
  std::optional<double> alpha;

  nlohmann::ordered_json to_json() const {
    return {{"method", to_string(method)},
            {"epsilon", json_or_null(epsilon)},
            {"alpha", json_or_null(alpha)}};
  }
};

inline RunConfig with_point(RunConfig cfg, const GridPoint& point) {
  cfg.method = point.method;
  cfg.epsilon = point.epsilon;
  cfg.alpha = point.alpha;
  return cfg;
}

struct SweepFailure {
  GridPoint point;
  std::string message;
};

struct SweepResult {
  std::vector<GridPoint> grid;
  std::vector<EvalRecord> records;
  std::vector<SweepFailure> failures;
};

/// run_pipeline per grid point; a failing point is recorded and skipped.
inline SweepResult sweep(const Dataset& ds, const RunConfig& base, const std::vector<GridPoint>& grid) {
  require(!grid.empty(), ErrorCode::empty_input, "empty sweep grid");
  SweepResult result;
  result.grid = grid;
  for (const auto& point : grid) {
    const auto cfg = with_point(base, point);
    cfg.validate();
    try {
      auto records = run_pipeline(ds, cfg);
      result.records.insert(result.records.end(), records.begin(), records.end());
    } catch (const Error& e) {
      result.failures.push_back({point, e.what()});
    }
  }
  return result;
}

struct ProbeResult {
  double accuracy = 0.0;
  double f1 = 0.0;
  double accuracy_std = 0.0;
  double f1_std = 0.0;
  std::vector<EvalRecord> records;
};

/// The same pipeline with the sensitive attribute as prediction target: how
/// well the predictor recovers S from the demonstrations an intervention
/// produces. Accuracy and F1 are averaged over all (seed, fold) cells.
inline ProbeResult reconstruction_probe(const Dataset& ds, RunConfig cfg) {
  cfg.target = PredictionTarget::sensitive;
  ProbeResult out;
  out.records = run_pipeline(ds, cfg);
  const auto n = static_cast<double>(out.records.size());
  for (const auto& r : out.records) {
    out.accuracy += r.accuracy / n;
    out.f1 += r.f1 / n;
  }
  for (const auto& r : out.records) {
    out.accuracy_std += (r.accuracy - out.accuracy) * (r.accuracy - out.accuracy) / n;
    out.f1_std += (r.f1 - out.f1) * (r.f1 - out.f1) / n;
  }
  out.accuracy_std = std::sqrt(out.accuracy_std);
  out.f1_std = std::sqrt(out.f1_std);
  return out;
}

inline const std::vector<std::size_t>& default_ablation_sizes() {
  static const std::vector<std::size_t> sizes{100, 300, 500, 700, 1500, 2000, 2500, 3000, 4000, 5000};
  return sizes;
}

/// For each method and each size, demonstrations are selected as usual and
/// then capped at that size. Records carry requested_size; a size larger
/// than the selection sets size_shortfall instead of failing.
inline std::vector<EvalRecord> context_size_ablation(const Dataset& ds,
                                                     const std::vector<std::size_t>& sizes,
                                                     const std::vector<GridPoint>& methods,
                                                     const RunConfig& cfg) {
  require(!sizes.empty(), ErrorCode::empty_input, "no ablation sizes");
  require(!methods.empty(), ErrorCode::empty_input, "no ablation methods");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    require(sizes[i] >= 1, ErrorCode::invalid_argument, "ablation sizes must be positive");
    require(i == 0 || sizes[i] > sizes[i - 1], ErrorCode::invalid_argument,
            "ablation sizes must be strictly ascending");
  }
  std::vector<EvalRecord> out;
  for (const auto& point : methods) {
    for (auto size : sizes) {
      auto run = with_point(cfg, point);
      run.context_size = size;
      auto records = run_pipeline(ds, run);
      out.insert(out.end(), records.begin(), records.end());
    }
  }
  return out;
}

}  // namespace fairctx
