// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "fair_context/fair_context.hpp"
#include "oracles.hpp"

using namespace fairctx;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("%s  %-28s %s; %.2fs (limit %.0fs)%s\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
              secs, budget_s, in_time ? "" : " TOO SLOW");
  std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) { return csv::format_fixed(v, digits); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

Dataset synth(std::size_t n, std::vector<double> shift, std::vector<double> weights, double bias,
              double noise_sd, double quantize, std::uint64_t seed) {
  SynthSpec spec;
  spec.n = n;
  spec.m_z = shift.size();
  spec.mean_shift = std::move(shift);
  spec.label_weights = std::move(weights);
  spec.label_bias = bias;
  spec.noise_sd = noise_sd;
  spec.quantize_step = quantize;
  spec.seed = seed;
  return generate_synthetic(spec);
}

double mean_of(const std::vector<EvalRecord>& records, double EvalRecord::*field) {
  double sum = 0;
  for (const auto& r : records) sum += r.*field;
  return sum / static_cast<double>(records.size());
}

Outcome metric_oracle() {
  std::mt19937_64 gen(1);
  double worst = 0;
  std::size_t mismatched_flags = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + gen() % 12;
    Labels pred(n), y(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(gen() & 1);
      y[i] = static_cast<int>(gen() & 1);
      s[i] = static_cast<int>(gen() & 1);
    }
    const auto r = evaluate(pred, y, s);
    worst = std::max({worst, std::abs(r.accuracy - oracle::accuracy(pred, y)), std::abs(r.f1 - oracle::f1(pred, y))});
    auto check = [&](const char* name, double got, std::optional<double> want) {
      if (r.defined(name) != want.has_value()) ++mismatched_flags;
      if (want) worst = std::max(worst, std::abs(got - *want));
    };
    check("dp", r.dp, oracle::dp(pred, s));
    check("eop", r.eop, oracle::alpha(pred, y, s, 1));
    check("eod", r.eod, oracle::eod(pred, y, s));
  }
  return {worst <= 1e-12 && mismatched_flags == 0,
          "1000 instances, max |diff| " + sci(worst) + ", definedness mismatches " + std::to_string(mismatched_flags)};
}

Outcome cr_orthogonality() {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> normal;
  double worst_cov = 0, worst_w = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(4 + gen() % 497);
    const auto m = static_cast<Eigen::Index>(1 + gen() % 20);
    Matrix z(n, m);
    Labels s(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = i < 2 ? static_cast<int>(i) : static_cast<int>(gen() & 1);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) z(i, j) = 3.0 * normal(gen) + (j + 1) * 0.5 * s[static_cast<std::size_t>(i)] + j;
    const auto model = cr_fit(z, s, 1.0, CrMode::s1);
    const Matrix out = cr_transform(model, z, s);
    const auto closed = oracle::cov_over_var(z, s);
    for (Eigen::Index j = 0; j < m; ++j) {
      worst_cov = std::max(worst_cov, std::abs(oracle::column_cov(out, j, s)));
      worst_w = std::max(worst_w, std::abs(model.w_star(j) - closed[static_cast<std::size_t>(j)]));
    }
  }
  return {worst_cov <= 1e-8 && worst_w <= 1e-10,
          "100 datasets, max |cov(z*,s)| " + sci(worst_cov) + ", max |w* - cov/var| " + sci(worst_w)};
}

Outcome conformal_coverage() {
  const auto ds = synth(6000, {0.7, 0.4, 0.0}, {0, 0, 0}, 0.0, 1.0, 0.0, 3);
  Indices train(2000), pool(4000);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(pool.begin(), pool.end(), std::size_t{2000});
  const auto clf = LogRegClassifier::fit(select_rows(ds.features, train), select_labels(ds.sensitive, train));
  const Vector p = clf->predict_proba(select_rows(ds.features, pool));
  const Labels s = select_labels(ds.sensitive, pool);

  std::string detail;
  bool pass = true;
  Rng rng(4);
  for (double eps : {0.05, 0.1, 0.2}) {
    double coverage = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      Indices order(pool.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      std::vector<double> scores;
      for (std::size_t r = 0; r < 200; ++r) scores.push_back(std::abs(s[order[r]] - p(static_cast<Eigen::Index>(order[r]))));
      const double tau = conformal_threshold(scores, eps);
      double hits = 0;
      for (std::size_t r = 200; r < order.size(); ++r) {
        const auto set = prediction_set(tau, p(static_cast<Eigen::Index>(order[r])));
        hits += s[order[r]] == 1 ? set.contains_one : set.contains_zero;
      }
      coverage += hits / static_cast<double>(order.size() - 200) / 1000.0;
    }
    pass = pass && coverage >= 1 - eps - 0.02;
    detail += (detail.empty() ? "" : ", ") + std::string("eps ") + fmt(eps, 2) + ": " + fmt(coverage) + " >= " + fmt(1 - eps - 0.02, 2);
  }
  return {pass, detail};
}

Outcome mask_monotonicity() {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 20 + gen() % 200;
    Vector p(static_cast<Eigen::Index>(n));
    for (auto& v : p) v = u(gen);
    Labels s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = u(gen) < p(static_cast<Eigen::Index>(i)) ? 1 : 0;
    const auto scores = nonconformity_scores(p, s);
    // smaller epsilon -> larger tau -> superset mask and selection
    double e1 = 0.01 + 0.98 * u(gen), e2 = 0.01 + 0.98 * u(gen);
    if (e1 > e2) std::swap(e1, e2);
    const double t1 = conformal_threshold(scores, e1), t2 = conformal_threshold(scores, e2);
    if (t1 < t2) ++violations;
    const auto wide = uncertainty_mask(t1, p), narrow = uncertainty_mask(t2, p);
    for (std::size_t i = 0; i < n; ++i)
      if (narrow[i] && !wide[i]) ++violations;
    p(0) = 0.5;
    const double lo = std::max(0.5, t2), hi = std::max(lo, t1);
    const auto small = select_uncertain(p, lo, e2).indices, big = select_uncertain(p, hi, e1).indices;
    if (!std::includes(big.begin(), big.end(), small.begin(), small.end())) ++violations;
  }
  return {violations == 0, "100 instances, " + std::to_string(violations) + " violations"};
}

Outcome leakage_direction() {
  const auto ds = synth(2000, {1.5, 1.5}, {1, 0}, 0.0, 1.0, 1.0, 6);
  RunConfig cfg;
  cfg.n_seeds = 10;
  cfg.method = Method::cr_s1;
  const auto s1 = reconstruction_probe(ds, cfg);
  cfg.method = Method::cr_s2;
  const auto s2 = reconstruction_probe(ds, cfg);
  return {s1.accuracy >= s2.accuracy + 0.10,
          "acc(cr_s1) " + fmt(s1.accuracy) + " vs acc(cr_s2) " + fmt(s2.accuracy) + " + 0.10"};
}

Outcome fairness_direction() {
  const auto ds = synth(5000, {1.0, 1.0, 1.0}, {3, -3, 0}, 2.0, 1.5, 0.0, 7);
  RunConfig cfg;
  cfg.n_seeds = 10;
  cfg.jobs = default_jobs();
  const auto vanilla = run_pipeline(ds, cfg);
  cfg.method = Method::uncertain_lr;
  cfg.epsilon = 0.05;
  const auto uncertain = run_pipeline(ds, cfg);
  const double dp_v = mean_of(vanilla, &EvalRecord::dp), dp_u = mean_of(uncertain, &EvalRecord::dp);
  const double acc_v = mean_of(vanilla, &EvalRecord::accuracy), acc_u = mean_of(uncertain, &EvalRecord::accuracy);
  return {dp_u <= 0.7 * dp_v && acc_v - acc_u <= 0.05,
          "dp " + fmt(dp_u) + " vs 0.7 x " + fmt(dp_v) + "; accuracy drop " + fmt(acc_v - acc_u) + " <= 0.05 (" +
              std::to_string(uncertain.size()) + " cells)"};
}

Outcome determinism() {
  const auto ds = synth(2000, {1.0, 1.0, 1.0}, {3, -3, 0}, 2.0, 1.5, 0.0, 8);
  std::string first;
  bool same = true;
  for (auto method : {Method::uncertain_lr, Method::balanced, Method::cr_s1}) {
    RunConfig cfg;
    cfg.method = method;
    cfg.base_seed = 2024;
    std::ostringstream a, b;
    write_jsonl(a, run_pipeline(ds, cfg));
    cfg.jobs = 4;
    write_jsonl(b, run_pipeline(ds, cfg));
    same = same && a.str() == b.str() && !a.str().empty();
  }
  return {same, same ? "JSONL byte-identical for uncertain_lr, balanced, cr_s1 (1 vs 4 threads)" : "JSONL differs"};
}

Outcome pipeline_identities() {
  const auto ds = synth(2000, {1.0, 0.5, 0.0}, {1, -1, 1}, 1.0, 1.0, 0.0, 9);
  RunConfig cfg;
  const auto vanilla = run_pipeline(ds, cfg);
  std::size_t mismatches = 0, unbalanced = 0;
  for (auto method : {Method::cr_s1, Method::cr_s2}) {
    cfg.method = method;
    cfg.alpha = 0.0;
    const auto cr = run_pipeline(ds, cfg);
    for (std::size_t i = 0; i < cr.size(); ++i) {
      auto a = to_json(cr[i]), b = to_json(vanilla[i]);
      for (auto* j : {&a, &b}) {
        j->erase("method");
        j->erase("alpha");
      }
      if (a != b) ++mismatches;
    }
  }
  cfg.method = Method::balanced;
  cfg.alpha.reset();
  const auto balanced = run_pipeline(ds, cfg);
  for (const auto& r : balanced) unbalanced += r.context_groups[0] != r.context_groups[1];
  return {mismatches == 0 && unbalanced == 0 && vanilla.size() == 50,
          "cr(alpha=0) vs vanilla mismatches " + std::to_string(mismatches) + ", unbalanced contexts " +
              std::to_string(unbalanced) + "/" + std::to_string(balanced.size())};
}

}  // namespace

int main() {
  criterion("metric oracle", 5, metric_oracle);
  criterion("cr orthogonality", 10, cr_orthogonality);
  criterion("conformal coverage", 60, conformal_coverage);
  criterion("mask monotonicity", 60, mask_monotonicity);
  criterion("leakage direction", 120, leakage_direction);
  criterion("fairness direction", 300, fairness_direction);
  criterion("determinism", 300, determinism);
  criterion("pipeline identities", 300, pipeline_identities);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
