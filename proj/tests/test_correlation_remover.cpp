#include <gtest/gtest.h>

#include <random>

#include "fair_context/correlation_remover.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fairctx {
namespace {

Matrix column(std::initializer_list<double> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return m;
}

TEST(CrFit, HandExample) {
  const auto model = cr_fit(column({1, 2, 3, 4}), Labels{0, 0, 1, 1}, 1.0, CrMode::s1);
  EXPECT_DOUBLE_EQ(model.s_mean, 0.5);
  ASSERT_EQ(model.w_star.size(), 1);
  EXPECT_NEAR(model.w_star(0), 2.0, 1e-12);
}

TEST(CrFit, UncorrelatedFeatureGetsZeroWeight) {
  const auto model = cr_fit(column({1, 2, 2, 1}), Labels{0, 0, 1, 1}, 1.0, CrMode::s1);
  EXPECT_NEAR(model.w_star(0), 0.0, 1e-12);
  const auto flat = cr_fit(column({5, 5, 5, 5}), Labels{0, 1, 0, 1}, 1.0, CrMode::s1);
  EXPECT_NEAR(flat.w_star(0), 0.0, 1e-12);
}

TEST(CrFit, ConstantSensitive) {
  try {
    cr_fit(column({1, 2, 3}), Labels{1, 1, 1}, 1.0, CrMode::s1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::constant_sensitive);
  }
}

TEST(CrTransform, HandExamples) {
  const Matrix z = column({1, 2, 3, 4});
  const Labels s{0, 0, 1, 1};
  const auto full = cr_transform(cr_fit(z, s, 1.0, CrMode::s1), z, s);
  const auto half = cr_transform(cr_fit(z, s, 0.5, CrMode::s1), z, s);
  const auto none = cr_transform(cr_fit(z, s, 0.0, CrMode::s1), z, s);
  const double want_full[] = {2, 3, 2, 3}, want_half[] = {1.5, 2.5, 2.5, 3.5};
  for (Eigen::Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(full(i, 0), want_full[i], 1e-12);
    EXPECT_NEAR(half(i, 0), want_half[i], 1e-12);
  }
  EXPECT_EQ(none, z);
}

TEST(CrTransform, LinearInAlpha) {
  std::mt19937_64 gen(3);
  const auto ds = testing::random_dataset(gen, 60, 4, 1);
  const auto at = [&](double a) { return cr_transform(cr_fit(ds, a, CrMode::s1), ds.features, ds.sensitive); };
  const Matrix z0 = at(0.0), z1 = at(1.0);
  for (double a : {0.25, 0.6, 0.9}) EXPECT_LT((at(a) - ((1 - a) * z0 + a * z1)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrApplyMode, S2LeavesTestUntouched) {
  std::mt19937_64 gen(4);
  const auto train = testing::random_dataset(gen, 80, 3, 1);
  const auto test = testing::random_dataset(gen, 20, 3, 1);
  const auto [tr2, te2] = cr_apply_mode(cr_fit(train, 1.0, CrMode::s2), train, test);
  EXPECT_EQ(te2.features, test.features);
  EXPECT_NE(tr2.features, train.features);
  const auto [tr1, te1] = cr_apply_mode(cr_fit(train, 1.0, CrMode::s1), train, test);
  EXPECT_EQ(tr1.features, tr2.features);
  EXPECT_NE(te1.features, test.features);
  for (auto mode : {CrMode::s1, CrMode::s2}) {
    const auto [a, b] = cr_apply_mode(cr_fit(train, 0.0, mode), train, test);
    EXPECT_EQ(a.features, train.features);
    EXPECT_EQ(b.features, test.features);
  }
}

// Least-squares residuals are orthogonal to the centered sensitive column, and
// the weight matches the closed-form slope.
TEST(CrOrthogonality, RandomDatasets) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto ds = testing::random_dataset(gen, 10 + gen() % 300, 1 + gen() % 12, 1);
    const auto model = cr_fit(ds, 1.0, CrMode::s1);
    const auto expected = oracle::cov_over_var(ds.features, ds.sensitive);
    const Matrix out = cr_transform(model, ds.features, ds.sensitive);
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      EXPECT_NEAR(model.w_star(j), expected[static_cast<std::size_t>(j)], 1e-10);
      EXPECT_LE(std::abs(oracle::column_cov(out, j, ds.sensitive)), 1e-8);
    }
  }
}

TEST(CrModelJson, RoundTrip) {
  const auto model = cr_fit(column({1, 2, 3, 4}), Labels{0, 0, 1, 1}, 0.7, CrMode::s2);
  const auto back = cr_model_from_json(to_json(model));
  EXPECT_EQ(back.w_star, model.w_star);
  EXPECT_EQ(back.s_mean, model.s_mean);
  EXPECT_EQ(back.alpha, 0.7);
  EXPECT_EQ(back.mode, CrMode::s2);
  EXPECT_THROW(parse_cr_mode("S3"), Error);
}

}  // namespace
}  // namespace fairctx
