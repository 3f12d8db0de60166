#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <utility>

#include "fair_context/error.hpp"
#include "fair_context/tabular.hpp"

namespace fairctx {

// S1 transforms train and test; S2 transforms train only.
enum class CrMode { s1, s2 };

inline std::string to_string(CrMode mode) { return mode == CrMode::s1 ? "S1" : "S2"; }

inline CrMode parse_cr_mode(const std::string& text) {
  if (text == "S1" || text == "s1") return CrMode::s1;
  if (text == "S2" || text == "s2") return CrMode::s2;
  fail(ErrorCode::invalid_argument, "unknown correlation-remover mode " + text);
}

/// Fitted linear decorrelation: z' = z - (s - s_mean) * w_star, blended with
/// the original features by alpha.
struct CrModel {
  Vector w_star;
  double s_mean = 0.0;
  double alpha = 1.0;
  CrMode mode = CrMode::s1;
};

/// Per feature j, w_j minimizes ||z_j - (s - s_mean) w_j||^2 over the training
/// rows. The least-squares problem is solved by Householder QR of the centered
/// sensitive column; features are not centered.
inline CrModel cr_fit(const Matrix& features, std::span<const int> sensitive, double alpha,
                      CrMode mode) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::invalid_argument, "alpha must lie in [0,1]");
  require(static_cast<std::size_t>(features.rows()) == sensitive.size(),
          ErrorCode::dimension_mismatch, "features/sensitive row count");
  require(!sensitive.empty(), ErrorCode::empty_dataset, "no training rows");
  const auto n = static_cast<Eigen::Index>(sensitive.size());
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) s(i) = sensitive[static_cast<std::size_t>(i)];
  CrModel model;
  model.s_mean = s.mean();
  model.alpha = alpha;
  model.mode = mode;
  const Matrix centered = (s.array() - model.s_mean).matrix();
  if (centered.squaredNorm() == 0.0) fail(ErrorCode::constant_sensitive, "var(s) = 0");
  model.w_star = centered.householderQr().solve(features).transpose();
  return model;
}

inline CrModel cr_fit(const Dataset& train, double alpha = 1.0, CrMode mode = CrMode::s1) {
  return cr_fit(train.features, train.sensitive, alpha, mode);
}

/// alpha * Z* + (1 - alpha) * Z. Needs each row's sensitive value.
inline Matrix cr_transform(const CrModel& model, const Matrix& features,
                           std::span<const int> sensitive) {
  require(features.cols() == model.w_star.size(), ErrorCode::dimension_mismatch,
          "feature count " + std::to_string(features.cols()) + " vs model " +
              std::to_string(model.w_star.size()));
  require(static_cast<std::size_t>(features.rows()) == sensitive.size(),
          ErrorCode::dimension_mismatch, "features/sensitive row count");
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double centered = sensitive[static_cast<std::size_t>(i)] - model.s_mean;
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      const double z = features(i, j);
      const double decorrelated = z - centered * model.w_star(j);
      out(i, j) = model.alpha * decorrelated + (1.0 - model.alpha) * z;
    }
  }
  return out;
}

/// Applies the model per its mode. The test part is transformed with its own
/// sensitive values under S1 and passed through untouched under S2.
inline std::pair<Dataset, Dataset> cr_apply_mode(const CrModel& model, const Dataset& train,
                                                 const Dataset& test) {
  std::pair<Dataset, Dataset> out{train, test};
  out.first.features = cr_transform(model, train.features, train.sensitive);
  if (model.mode == CrMode::s1)
    out.second.features = cr_transform(model, test.features, test.sensitive);
  else
    require(test.features.cols() == model.w_star.size(), ErrorCode::dimension_mismatch,
            "test feature count");
  return out;
}

inline nlohmann::json to_json(const CrModel& model) {
  std::vector<double> w(model.w_star.data(), model.w_star.data() + model.w_star.size());
  return {{"w_star", w}, {"s_mean", model.s_mean}, {"alpha", model.alpha},
          {"mode", to_string(model.mode)}};
}

inline CrModel cr_model_from_json(const nlohmann::json& j) {
  CrModel model;
  const auto w = j.at("w_star").get<std::vector<double>>();
  model.w_star = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  model.s_mean = j.at("s_mean").get<double>();
  model.alpha = j.at("alpha").get<double>();
  model.mode = parse_cr_mode(j.at("mode").get<std::string>());
  return model;
}

}  // namespace fairctx
