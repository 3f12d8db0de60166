#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "fair_context/experiment.hpp"
#include "fair_context/report.hpp"

namespace fairctx {
namespace {

Dataset synth(std::size_t n, std::vector<double> shift, std::vector<double> weights, double bias,
              std::uint64_t seed, double quantize = 0.0, double pi = 0.5) {
  SynthSpec spec;
  spec.n = n;
  spec.m_z = shift.size();
  spec.mean_shift = std::move(shift);
  spec.label_weights = std::move(weights);
  spec.label_bias = bias;
  spec.quantize_step = quantize;
  spec.group_rate = pi;
  spec.seed = seed;
  return generate_synthetic(spec);
}

RunConfig config(Method method, std::size_t seeds = 2) {
  RunConfig cfg;
  cfg.method = method;
  cfg.n_seeds = seeds;
  cfg.base_seed = 42;
  return cfg;
}

std::string jsonl(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  write_jsonl(out, records);
  return out.str();
}

const Dataset& biased() {
  static const Dataset ds = synth(1500, {0.6, 0.6, 0.6}, {3, -3, 0}, 2.0, 7, 0.0);
  return ds;
}

TEST(RunPipeline, OneRecordPerSeedAndFold) {
  const auto records = run_pipeline(biased(), config(Method::vanilla));
  ASSERT_EQ(records.size(), 10u);
  for (std::size_t c = 0; c < records.size(); ++c) {
    EXPECT_EQ(records[c].seed_index, c / 5);
    EXPECT_EQ(records[c].fold_index, c % 5);
    EXPECT_EQ(records[c].test_size + records[c].context_size, 1200u);
    EXPECT_FALSE(records[c].epsilon || records[c].alpha || records[c].tau);
  }
}

TEST(RunPipeline, UnbiasedDataGivesSmallDisparity) {
  const auto ds = synth(5000, {0.0, 0.0}, {1.0, -1.0}, 0.0, 3);
  const auto records = run_pipeline(ds, config(Method::vanilla));
  double dp = 0;
  for (const auto& r : records) dp += r.dp / static_cast<double>(records.size());
  EXPECT_LE(dp, 0.05);
}

TEST(RunPipeline, EmptySelectionCarriesSeedAndFold) {
  // groups are perfectly separable, so calibrated sets are never ambiguous
  const auto ds = synth(600, {8.0}, {1.0}, 0.0, 1);
  auto cfg = config(Method::uncertain_lr, 1);
  cfg.epsilon = 0.3;
  try {
    run_pipeline(ds, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_selection);
    EXPECT_NE(std::string(e.what()).find("[seed 0, fold 0]"), std::string::npos) << e.what();
  }
  cfg.uncertain_fallback = 50;
  for (const auto& r : run_pipeline(ds, cfg)) EXPECT_EQ(r.context_size, 50u);
}

TEST(RunPipeline, CrAlphaZeroMatchesVanilla) {
  const auto vanilla = run_pipeline(biased(), config(Method::vanilla));
  for (auto method : {Method::cr_s1, Method::cr_s2}) {
    auto cfg = config(method);
    cfg.alpha = 0.0;
    const auto cr = run_pipeline(biased(), cfg);
    ASSERT_EQ(cr.size(), vanilla.size());
    for (std::size_t i = 0; i < cr.size(); ++i) {
      EXPECT_EQ(cr[i].context_size, vanilla[i].context_size);
      EXPECT_EQ(cr[i].accuracy, vanilla[i].accuracy);
      EXPECT_EQ(cr[i].f1, vanilla[i].f1);
      EXPECT_EQ(cr[i].dp, vanilla[i].dp);
      EXPECT_EQ(cr[i].eop, vanilla[i].eop);
      EXPECT_EQ(cr[i].eod, vanilla[i].eod);
    }
  }
}

TEST(RunPipeline, BalancedContextsHaveEqualGroups) {
  const auto ds = synth(1500, {1.0, 0.5}, {1, 1}, 0.5, 4, 0.0, 0.3);
  for (const auto& r : run_pipeline(ds, config(Method::balanced))) {
    EXPECT_EQ(r.context_groups[0], r.context_groups[1]);
    EXPECT_GT(r.context_groups[0], 0u);
  }
}

TEST(RunPipeline, HoldoutRowsNeverReachFolds) {
  for (auto method : {Method::uncertain_lr, Method::uncertain_strong, Method::balanced}) {
    PipelineTrace trace;
    auto cfg = config(method);
    run_pipeline(biased(), cfg, &trace);
    ASSERT_EQ(trace.seeds.size(), 2u);
    for (const auto& t : trace.seeds) {
      auto sorted = [](Indices v) {
        std::sort(v.begin(), v.end());
        return v;
      };
      const auto holdout = sorted(t.holdout_rows);
      const auto main = sorted(t.main_rows);
      Indices both;
      std::set_intersection(holdout.begin(), holdout.end(), main.begin(), main.end(), std::back_inserter(both));
      EXPECT_TRUE(both.empty());
      if (is_uncertain(method)) {
        EXPECT_EQ(t.proper_rows.size() + t.calibration_rows.size(), t.holdout_rows.size());
        for (const auto& part : {t.proper_rows, t.calibration_rows})
          for (auto i : part) EXPECT_TRUE(std::binary_search(holdout.begin(), holdout.end(), i));
      }
      for (std::size_t f = 0; f < t.folds.size(); ++f) {
        const auto train = sorted(t.folds[f].train);
        for (auto i : t.folds[f].test) {
          EXPECT_TRUE(std::binary_search(main.begin(), main.end(), i));
          EXPECT_FALSE(std::binary_search(train.begin(), train.end(), i));
        }
        for (auto i : t.context_rows[f]) EXPECT_TRUE(std::binary_search(train.begin(), train.end(), i));
      }
    }
  }
}

TEST(RunPipeline, DeterministicAcrossRunsAndThreads) {
  auto cfg = config(Method::uncertain_lr);
  const auto a = jsonl(run_pipeline(biased(), cfg));
  EXPECT_EQ(a, jsonl(run_pipeline(biased(), cfg)));
  cfg.jobs = 3;
  EXPECT_EQ(a, jsonl(run_pipeline(biased(), cfg)));
  cfg.base_seed = 43;
  EXPECT_NE(a, jsonl(run_pipeline(biased(), cfg)));
}

TEST(RunPipeline, ContextCapApplies) {
  auto cfg = config(Method::vanilla, 1);
  cfg.max_context = 100;
  for (const auto& r : run_pipeline(biased(), cfg)) EXPECT_EQ(r.context_size, 100u);
}

TEST(RunPipeline, LogRegPredictorRuns) {
  auto cfg = config(Method::cr_s1, 1);
  cfg.predictor = PredictorSpec::parse("logreg");
  const auto records = run_pipeline(biased(), cfg);
  EXPECT_EQ(records.size(), 5u);
  EXPECT_GT(records[0].accuracy, 0.6);
}

TEST(RunConfig, RejectsMismatchedParameters) {
  auto cfg = config(Method::cr_s1);
  cfg.epsilon = 0.1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = config(Method::uncertain_lr);
  cfg.alpha = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = config(Method::uncertain_lr);
  cfg.epsilon = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(config(Method::uncertain_lr).effective_epsilon(), 0.05);
  EXPECT_EQ(config(Method::cr_s2).effective_alpha(), 1.0);
  EXPECT_THROW(parse_method("random"), Error);
  EXPECT_THROW(PredictorSpec::parse("svm"), Error);
}

TEST(Sweep, ContextShrinksAsEpsilonGrows) {
  std::vector<GridPoint> grid;
  for (double eps : {0.01, 0.05, 0.2, 0.5, 0.9}) grid.push_back({Method::uncertain_lr, eps, std::nullopt});
  auto base = config(Method::vanilla);
  base.uncertain_fallback = 1;
  const auto result = sweep(biased(), base, grid);
  EXPECT_TRUE(result.failures.empty());
  ASSERT_EQ(result.records.size(), 50u);
  double previous = 1e18;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mean = 0;
    for (std::size_t c = 0; c < 10; ++c) mean += static_cast<double>(result.records[g * 10 + c].context_size) / 10;
    EXPECT_LE(mean, previous) << "epsilon " << *grid[g].epsilon;
    previous = mean;
  }
}

TEST(Sweep, FailingPointRecordedAndSkipped) {
  const auto ds = synth(600, {8.0}, {1.0}, 0.0, 1);
  const std::vector<GridPoint> grid{{Method::uncertain_lr, 0.3, std::nullopt}, {Method::vanilla, {}, {}}};
  const auto result = sweep(ds, config(Method::vanilla, 1), grid);
  ASSERT_EQ(result.failures.size(), 1u);
  EXPECT_NE(result.failures[0].message.find("EmptySelection"), std::string::npos) << result.failures[0].message;
  EXPECT_EQ(result.records.size(), 5u);
  EXPECT_THROW(sweep(ds, config(Method::vanilla), {}), Error);
}

TEST(Sweep, AlphaZeroPointMatchesVanilla) {
  const std::vector<GridPoint> grid{{Method::vanilla, {}, {}}, {Method::cr_s1, {}, 0.0}, {Method::cr_s1, {}, 1.0}};
  const auto result = sweep(biased(), config(Method::vanilla, 1), grid);
  ASSERT_EQ(result.records.size(), 15u);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(result.records[c].accuracy, result.records[5 + c].accuracy);
}

TEST(Ablation, ShortfallIsFlagged) {
  const auto ds = synth(3750, {1.0, 1.0}, {1, -1}, 1.0, 5);
  auto cfg = config(Method::vanilla, 1);
  const auto records = context_size_ablation(ds, {100, 5000}, {{Method::vanilla, {}, {}}}, cfg);
  ASSERT_EQ(records.size(), 10u);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(records[c].context_size, 100u);
    EXPECT_FALSE(records[c].size_shortfall);
    EXPECT_EQ(records[5 + c].context_size, 2400u);
    EXPECT_TRUE(records[5 + c].size_shortfall);
    EXPECT_EQ(records[5 + c].requested_size, 5000u);
  }
}

TEST(Ablation, FullSizeMatchesPipeline) {
  auto cfg = config(Method::balanced, 1);
  const auto plain = run_pipeline(biased(), cfg);
  const auto ablated = context_size_ablation(biased(), {960}, {{Method::balanced, {}, {}}}, cfg);
  ASSERT_EQ(plain.size(), ablated.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain[i].context_size, ablated[i].context_size);
    EXPECT_EQ(plain[i].accuracy, ablated[i].accuracy);
    EXPECT_EQ(plain[i].dp, ablated[i].dp);
  }
}

TEST(Ablation, SizesMustAscend) {
  EXPECT_THROW(context_size_ablation(biased(), {500, 100}, {{Method::vanilla, {}, {}}}, config(Method::vanilla)),
               Error);
  EXPECT_EQ(default_ablation_sizes(),
            (std::vector<std::size_t>{100, 300, 500, 700, 1500, 2000, 2500, 3000, 4000, 5000}));
}

TEST(ReconstructionProbe, ChanceWithoutSignal) {
  const auto ds = synth(3000, {0.0, 0.0}, {1, 1}, 0.0, 8, 0.0, 0.3);
  const auto probe = reconstruction_probe(ds, config(Method::vanilla));
  EXPECT_NEAR(probe.accuracy, 0.7, 0.05);
  EXPECT_EQ(probe.records.front().target, PredictionTarget::sensitive);
}

TEST(ReconstructionProbe, UncertainSelectionHidesGroup) {
  const auto ds = synth(2000, {1.0, 1.0}, {1, 0}, 0.0, 9);
  const auto vanilla = reconstruction_probe(ds, config(Method::vanilla));
  const auto uncertain = reconstruction_probe(ds, config(Method::uncertain_lr));
  EXPECT_LE(uncertain.accuracy, vanilla.accuracy);
}

TEST(ReconstructionProbe, TestSideTransformLeaks) {
  const auto ds = synth(2000, {1.5, 1.5}, {0, 0}, 0.0, 10, 1.0);
  const auto s1 = reconstruction_probe(ds, config(Method::cr_s1));
  const auto s2 = reconstruction_probe(ds, config(Method::cr_s2));
  EXPECT_GE(s1.accuracy, s2.accuracy);
}

TEST(ParallelFor, LowestFailingTaskWins) {
  for (std::size_t jobs : {1u, 4u}) {
    try {
      parallel_for(20, jobs, [](std::size_t t, std::size_t) {
        if (t == 7 || t == 12) throw std::runtime_error("task " + std::to_string(t));
      });
      FAIL();
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "task 7");
    }
  }
}

}  // namespace
}  // namespace fairctx
