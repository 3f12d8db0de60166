#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fair_context/conformal.hpp"
#include "fair_context/error.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx {

/// Predicts P(label = 1) for query rows by conditioning on labeled context
/// rows. Implementations must not retain or mutate the context between calls.
class InContextPredictor {
 public:
  virtual ~InContextPredictor() = default;
  virtual Vector predict_proba(const Matrix& context_x, std::span<const int> context_y,
                               const Matrix& query_x) = 0;
  virtual std::string name() const = 0;
  /// Largest context the predictor accepts, if bounded.
  virtual std::optional<std::size_t> max_context() const { return std::nullopt; }
};

/// label = 1 iff p >= 0.5
inline Labels threshold_labels(const Vector& probabilities) {
  Labels out(static_cast<std::size_t>(probabilities.size()));
  for (Eigen::Index i = 0; i < probabilities.size(); ++i)
    out[static_cast<std::size_t>(i)] = probabilities(i) >= 0.5 ? 1 : 0;
  return out;
}

namespace detail {

inline void check_context(const Matrix& cx, std::span<const int> cy, const Matrix& qx) {
  if (cy.empty()) fail(ErrorCode::empty_context, "context has no rows");
  require(static_cast<std::size_t>(cx.rows()) == cy.size(), ErrorCode::dimension_mismatch,
          "context features/labels row count");
  require(cx.cols() == qx.cols(), ErrorCode::dimension_mismatch, "context/query feature count");
}

struct Standardizer {
  Vector mean;
  Vector scale;      // population sd, or 1 where the feature is constant
  std::vector<bool> constant;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const auto n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale = Vector::Ones(x.cols());
    s.constant.assign(static_cast<std::size_t>(x.cols()), false);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
      const double sd = std::sqrt(var);
      if (!(sd > 1e-12 * (1.0 + std::abs(s.mean(j))))) {
        s.constant[static_cast<std::size_t>(j)] = true;
      } else {
        s.scale(j) = sd;
      }
    }
    return s;
  }

  Matrix apply(const Matrix& x) const {
    Matrix out = (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    return out;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// k nearest neighbours

/// Fraction of label-1 rows among the k nearest context rows. Features are
/// standardized by the context mean/sd; constant features are ignored.
/// Distance ties go to the lower context index.
inline Vector knn_predict(const Matrix& context_x, std::span<const int> context_y,
                          const Matrix& query_x, std::size_t k) {
  require(k >= 1, ErrorCode::invalid_argument, "k must be >= 1");
  detail::check_context(context_x, context_y, query_x);
  const auto scaler = detail::Standardizer::fit(context_x);
  std::vector<Eigen::Index> used;
  for (Eigen::Index j = 0; j < context_x.cols(); ++j)
    if (!scaler.constant[static_cast<std::size_t>(j)]) used.push_back(j);

  const Matrix cz = scaler.apply(context_x);
  const Matrix qz = scaler.apply(query_x);
  const std::size_t n = context_y.size();
  const std::size_t kk = std::min(k, n);

  Vector out(query_x.rows());
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (Eigen::Index q = 0; q < qz.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (auto j : used) {
        const double diff = cz(static_cast<Eigen::Index>(i), j) - qz(q, j);
        d += diff * diff;
      }
      dist[i] = {d, i};
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk - 1), dist.end());
    std::size_t positives = 0;
    for (std::size_t r = 0; r < kk; ++r) positives += context_y[dist[r].second] == 1;
    out(q) = static_cast<double>(positives) / static_cast<double>(kk);
  }
  return out;
}

class KnnPredictor final : public InContextPredictor {
 public:
  explicit KnnPredictor(std::size_t k = 16) : k_(k) {}

  Vector predict_proba(const Matrix& context_x, std::span<const int> context_y,
                       const Matrix& query_x) override {
    return knn_predict(context_x, context_y, query_x, k_);
  }
  std::string name() const override { return "knn"; }
  std::size_t k() const { return k_; }

 private:
  std::size_t k_;
};

// ---------------------------------------------------------------------------
// Logistic regression

struct LogRegConfig {
  double l2 = 1e-4;
  int max_iters = 500;
  double tol = 1e-6;
  double learning_rate = 0.1;
};

struct LogRegModel {
  Vector weights;     // on standardized features
  double intercept = 0.0;
  Vector mean;
  Vector scale;
  LogRegConfig config;
  bool constant = false;  // single-class training data
  double prior = 0.5;
  int iterations = 0;
};

/// Mean log-loss on standardized features plus (l2/2)||w||^2; the intercept
/// is not penalized.
inline double logreg_loss(const Matrix& xs, std::span<const int> y, const Vector& w,
                          double intercept, double l2) {
  const Vector eta = (xs * w).array() + intercept;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    loss += softplus - y[static_cast<std::size_t>(i)] * e;
  }
  return loss / static_cast<double>(eta.size()) + 0.5 * l2 * w.squaredNorm();
}

/// Gradient of logreg_loss; the last entry is d/d intercept.
inline Vector logreg_gradient(const Matrix& xs, std::span<const int> y, const Vector& w,
                              double intercept, double l2) {
  const auto n = static_cast<double>(xs.rows());
  Vector residual(xs.rows());
  const Vector eta = (xs * w).array() + intercept;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    residual(i) = sigmoid(eta(i)) - y[static_cast<std::size_t>(i)];
  Vector g(w.size() + 1);
  g.head(w.size()) = xs.transpose() * residual / n + l2 * w;
  g(w.size()) = residual.sum() / n;
  return g;
}

inline Matrix logreg_standardize(const LogRegModel& model, const Matrix& x) {
  return (x.rowwise() - model.mean.transpose()).array().rowwise() / model.scale.transpose().array();
}

/// Full-batch gradient descent from zero weights on standardized features.
/// Single-class data yields a constant model predicting the class rate.
inline LogRegModel logreg_fit(const Matrix& x, std::span<const int> y, const LogRegConfig& config = {}) {
  require(static_cast<std::size_t>(x.rows()) == y.size(), ErrorCode::dimension_mismatch,
          "features/labels row count");
  require(!y.empty(), ErrorCode::empty_dataset, "no training rows");
  LogRegModel model;
  model.config = config;
  const auto scaler = detail::Standardizer::fit(x);
  model.mean = scaler.mean;
  model.scale = scaler.scale;
  model.weights = Vector::Zero(x.cols());

  std::size_t positives = 0;
  for (int v : y) positives += v == 1;
  model.prior = static_cast<double>(positives) / static_cast<double>(y.size());
  if (y.size() < 2 || positives == 0 || positives == y.size()) {
    model.constant = true;
    return model;
  }

  const Matrix xs = scaler.apply(x);
  for (model.iterations = 0; model.iterations < config.max_iters; ++model.iterations) {
    const Vector g = logreg_gradient(xs, y, model.weights, model.intercept, config.l2);
    if (g.lpNorm<Eigen::Infinity>() < config.tol) break;
    model.weights -= config.learning_rate * g.head(model.weights.size());
    model.intercept -= config.learning_rate * g(model.weights.size());
  }
  const double loss = logreg_loss(xs, y, model.weights, model.intercept, config.l2);
  if (!std::isfinite(loss) || !model.weights.allFinite() || !std::isfinite(model.intercept))
    fail(ErrorCode::non_finite_loss, "gradient descent diverged");
  return model;
}

inline Vector logreg_predict_proba(const LogRegModel& model, const Matrix& x) {
  require(x.cols() == model.mean.size(), ErrorCode::dimension_mismatch, "feature count");
  if (model.constant) return Vector::Constant(x.rows(), model.prior);
  const Vector eta = (logreg_standardize(model, x) * model.weights).array() + model.intercept;
  return eta.unaryExpr([](double e) { return sigmoid(e); });
}

class LogRegPredictor final : public InContextPredictor {
 public:
  explicit LogRegPredictor(LogRegConfig config = {}) : config_(config) {}

  Vector predict_proba(const Matrix& context_x, std::span<const int> context_y,
                       const Matrix& query_x) override {
    detail::check_context(context_x, context_y, query_x);
    return logreg_predict_proba(logreg_fit(context_x, context_y, config_), query_x);
  }
  std::string name() const override { return "logreg"; }

 private:
  LogRegConfig config_;
};

// ---------------------------------------------------------------------------
// Sensitive-attribute classifiers for conformal calibration

class LogRegClassifier final : public ProbClassifier {
 public:
  explicit LogRegClassifier(LogRegModel model) : model_(std::move(model)) {}
  static std::shared_ptr<LogRegClassifier> fit(const Matrix& x, std::span<const int> s,
                                               const LogRegConfig& config = {}) {
    return std::make_shared<LogRegClassifier>(logreg_fit(x, s, config));
  }
  Vector predict_proba(const Matrix& features) const override {
    return logreg_predict_proba(model_, features);
  }
  const LogRegModel& model() const { return model_; }

 private:
  LogRegModel model_;
};

/// Uses an in-context predictor, conditioned on fixed labeled rows, as the
/// classifier. Calls are serialized.
class InContextClassifier final : public ProbClassifier {
 public:
  InContextClassifier(std::shared_ptr<InContextPredictor> predictor, Matrix context_x,
                      Labels context_y)
      : predictor_(std::move(predictor)),
        context_x_(std::move(context_x)),
        context_y_(std::move(context_y)) {}

  Vector predict_proba(const Matrix& features) const override {
    std::lock_guard lock(mutex_);
    return predictor_->predict_proba(context_x_, context_y_, features);
  }

 private:
  std::shared_ptr<InContextPredictor> predictor_;
  Matrix context_x_;
  Labels context_y_;
  mutable std::mutex mutex_;
};

}  // namespace fairctx
