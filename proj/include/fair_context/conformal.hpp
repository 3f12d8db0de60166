#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fair_context/error.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx {

/// Probabilistic classifier of the sensitive attribute: P(S=1 | x).
class ProbClassifier {
 public:
  virtual ~ProbClassifier() = default;
  virtual Vector predict_proba(const Matrix& features) const = 0;
};

struct PredictionSet {
  bool contains_zero = false;
  bool contains_one = false;

  int size() const { return static_cast<int>(contains_zero) + static_cast<int>(contains_one); }
  bool uncertain() const { return size() == 2; }
};

/// Split-conformal model over a sensitive-attribute classifier.
struct ConformalModel {
  double tau = 1.0;
  double epsilon = 0.05;
  std::size_t n_calib = 0;
  std::shared_ptr<const ProbClassifier> classifier;
};

/// Rank k = ceil((n+1)(1-eps)), clamped to [1, n]. The guard keeps products
/// such as 5 * 0.8 from rounding up past an integer.
inline std::size_t conformal_rank(std::size_t n, double epsilon) {
  const double raw = static_cast<double>(n + 1) * (1.0 - epsilon);
  const double k = std::ceil(raw - 1e-12 * static_cast<double>(n + 1));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(k, 1.0)), 1, n);
}

/// k-th smallest score (no interpolation).
inline double conformal_threshold(std::vector<double> scores, double epsilon) {
  require(!scores.empty(), ErrorCode::empty_calibration, "no calibration scores");
  require(epsilon > 0.0 && epsilon < 1.0, ErrorCode::invalid_argument, "epsilon must lie in (0,1)");
  const auto k = conformal_rank(scores.size(), epsilon);
  std::nth_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k - 1), scores.end());
  return scores[k - 1];
}

inline std::vector<double> nonconformity_scores(const Vector& p_hat, std::span<const int> s) {
  require(static_cast<std::size_t>(p_hat.size()) == s.size(), ErrorCode::dimension_mismatch,
          "probabilities/labels length");
  std::vector<double> scores(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    scores[i] = std::abs(s[i] - p_hat(static_cast<Eigen::Index>(i)));
  return scores;
}

inline ConformalModel calibrate(std::shared_ptr<const ProbClassifier> classifier,
                                const Matrix& calib_features, std::span<const int> calib_s,
                                double epsilon) {
  require(classifier != nullptr, ErrorCode::invalid_argument, "null classifier");
  require(!calib_s.empty(), ErrorCode::empty_calibration, "calibration set is empty");
  ConformalModel model;
  model.epsilon = epsilon;
  model.n_calib = calib_s.size();
  model.tau = conformal_threshold(nonconformity_scores(classifier->predict_proba(calib_features), calib_s),
                                  epsilon);
  model.classifier = std::move(classifier);
  return model;
}

/// Gamma = {s in {0,1} : |s - p_hat| <= tau}
inline PredictionSet prediction_set(double tau, double p_hat) {
  return {std::abs(p_hat) <= tau, std::abs(1.0 - p_hat) <= tau};
}

inline PredictionSet prediction_set(const ConformalModel& model, double p_hat) {
  return prediction_set(model.tau, p_hat);
}

/// true where |Gamma| = 2. Empty sets count as certain.
inline std::vector<bool> uncertainty_mask(double tau, const Vector& p_hat) {
  std::vector<bool> mask(static_cast<std::size_t>(p_hat.size()));
  for (Eigen::Index i = 0; i < p_hat.size(); ++i)
    mask[static_cast<std::size_t>(i)] = prediction_set(tau, p_hat(i)).uncertain();
  return mask;
}

inline std::vector<bool> uncertainty_mask(const ConformalModel& model, const Matrix& features) {
  require(model.classifier != nullptr, ErrorCode::invalid_argument, "model not calibrated");
  return uncertainty_mask(model.tau, model.classifier->predict_proba(features));
}

struct SensitiveHoldout {
  Dataset proper_train;
  Dataset calibration;
};

/// Stratified 50/50 split of the held-out rows into proper-training and
/// calibration parts.
inline SensitiveHoldout split_sensitive_holdout(const Dataset& holdout, std::uint64_t seed) {
  auto split = holdout_split(holdout, 0.5, seed);
  return {std::move(split.main), std::move(split.holdout)};
}

}  // namespace fairctx
