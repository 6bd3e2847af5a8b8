#include "lnprobe/qe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "least_squares.hpp"
#include "lnprobe/error.hpp"
#include "model_io.hpp"

namespace lnprobe {

std::string_view feature_mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::Src: return "src";
    case FeatureMode::Mt: return "mt";
    case FeatureMode::Both: return "both";
  }
  return "both";
}

FeatureMode parse_feature_mode(std::string_view name) {
  if (name == "src") return FeatureMode::Src;
  if (name == "mt") return FeatureMode::Mt;
  if (name == "both") return FeatureMode::Both;
  throw Error(ErrorCode::ParseError,
              "unknown feature mode '" + std::string(name) + "' (expected src, mt or both)");
}

std::vector<double> distance_score(std::span<const QERecord> records, Transform transform,
                                   const LinearMap* map, const QECentroids* centroids) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no QE records");
  if (transform == Transform::Projected && !map) {
    throw Error(ErrorCode::MissingInput, "projected QE scoring requires a linear map");
  }

  std::optional<QECentroids> estimated;
  if (transform == Transform::Centered && !centroids) {
    std::vector<SentenceRepr> src, mt;
    for (const auto& r : records) {
      src.push_back(r.source_repr);
      mt.push_back(r.mt_repr);
    }
    estimated = QECentroids{compute_centroid(src), compute_centroid(mt)};
    centroids = &*estimated;
  }

  std::vector<double> scores;
  scores.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Eigen::VectorXd src = records[i].source_repr.vector;
    Eigen::VectorXd mt = records[i].mt_repr.vector;
    try {
      if (transform == Transform::Centered) {
        if (src.size() != centroids->source.vector.size() || mt.size() != centroids->mt.vector.size()) {
          throw Error(ErrorCode::DimensionMismatch, "centroid dimension differs from representation");
        }
        src -= centroids->source.vector;
        mt -= centroids->mt.vector;
      } else if (transform == Transform::Projected) {
        src = apply_projection(*map, src);
      }
      scores.push_back(cosine_distance(src, mt));
    } catch (const Error& e) {
      throw Error(e.code(), "record " + std::to_string(i) + ": " + e.what());
    }
  }
  return scores;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "series of length " + std::to_string(x.size()) +
                                               " and " + std::to_string(y.size()));
  }
  if (x.size() < 2) throw Error(ErrorCode::EmptyInput, "correlation needs at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::ConstantInput, sxx == 0.0 ? "first series is constant" : "second series is constant");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Eigen::MatrixXd qe_features(std::span<const QERecord> records, FeatureMode mode) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no QE records");
  const auto dim = records.front().source_repr.vector.size();
  const Eigen::Index width = mode == FeatureMode::Both ? 2 * dim : dim;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(records.size()), width);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.source_repr.vector.size() != dim || r.mt_repr.vector.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch, "record " + std::to_string(i) +
                                                    " has mismatched representation dimensions");
    }
    const auto row = static_cast<Eigen::Index>(i);
    switch (mode) {
      case FeatureMode::Src: features.row(row) = r.source_repr.vector.transpose(); break;
      case FeatureMode::Mt: features.row(row) = r.mt_repr.vector.transpose(); break;
      case FeatureMode::Both:
        features.row(row).head(dim) = r.source_repr.vector.transpose();
        features.row(row).tail(dim) = r.mt_repr.vector.transpose();
        break;
    }
  }
  return features;
}

QEModel train_qe(std::span<const QERecord> records, FeatureMode mode, double ridge_lambda) {
  const Eigen::MatrixXd features = qe_features(records, mode);
  Eigen::MatrixXd labels(features.rows(), 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!(records[i].hter >= 0.0)) {
      throw Error(ErrorCode::InvariantViolation, "record " + std::to_string(i) + " has a negative label");
    }
    labels(static_cast<Eigen::Index>(i), 0) = records[i].hter;
  }
  const auto fit = detail::solve_affine_least_squares(features, labels, ridge_lambda);
  QEModel model;
  model.weights = fit.weights.col(0);
  model.bias = fit.bias(0);
  model.mode = mode;
  model.ridge_lambda = ridge_lambda;
  return model;
}

std::vector<double> predict_qe(const QEModel& model, std::span<const QERecord> records) {
  const Eigen::MatrixXd features = qe_features(records, model.mode);
  if (features.cols() != model.weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "model expects " + std::to_string(model.weights.size()) +
                                                  " features, records give " +
                                                  std::to_string(features.cols()));
  }
  const Eigen::VectorXd predictions = (features * model.weights).array() + model.bias;
  return {predictions.data(), predictions.data() + predictions.size()};
}

std::vector<double> default_lambda_grid() { return {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3}; }

LambdaSelection select_qe_lambda(std::span<const QERecord> train, std::span<const QERecord> validation,
                                 FeatureMode mode, const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorCode::EmptyInput, "empty lambda grid");
  std::vector<double> labels;
  for (const auto& r : validation) labels.push_back(r.hter);

  LambdaSelection selection;
  double best = -std::numeric_limits<double>::infinity();
  for (const double lambda : grid) {
    QEModel model = train_qe(train, mode, lambda);
    double score;
    try {
      score = pearson(predict_qe(model, validation), labels);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ConstantInput) throw;
      score = 0.0;
    }
    selection.lambdas.push_back(lambda);
    selection.validation_pearson.push_back(score);
    if (score > best) {
      best = score;
      selection.model = std::move(model);
    }
  }
  return selection;
}

void save_qe_model(const QEModel& model, const std::filesystem::path& basename) {
  nlohmann::json manifest = {
      {"format", "lnprobe-qe-model"},
      {"version", 1},
      {"feature_mode", feature_mode_name(model.mode)},
      {"ridge_lambda", model.ridge_lambda},
      {"num_features", model.weights.size()},
      {"layout", "weights [num_features], then bias"},
  };
  std::vector<double> values(model.weights.data(), model.weights.data() + model.weights.size());
  values.push_back(model.bias);
  detail::save_model_pair(basename, std::move(manifest), values);
}

QEModel load_qe_model(const std::filesystem::path& basename) {
  auto pair = detail::load_model_pair(basename, "lnprobe-qe-model");
  QEModel model;
  try {
    const auto n = pair.manifest.at("num_features").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(pair.values.size()) != n + 1) {
      throw Error(ErrorCode::InvariantViolation, basename.string() + ": blob size does not match");
    }
    model.mode = parse_feature_mode(pair.manifest.at("feature_mode").get<std::string>());
    model.ridge_lambda = pair.manifest.at("ridge_lambda").get<double>();
    model.weights = Eigen::Map<const Eigen::VectorXd>(pair.values.data(), n);
    model.bias = pair.values.back();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, basename.string() + ".json: " + e.what());
  }
  return model;
}

}  // namespace lnprobe
