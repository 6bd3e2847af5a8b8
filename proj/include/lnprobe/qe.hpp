#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lnprobe/embstore.hpp"
#include "lnprobe/geometry.hpp"
#include "lnprobe/retrieval.hpp"

namespace lnprobe {

struct QERecord {
  SentenceRepr source_repr;
  SentenceRepr mt_repr;
  double hter = 0.0;  // opaque non-negative quality label
};

enum class FeatureMode { Src, Mt, Both };

std::string_view feature_mode_name(FeatureMode mode);  // "src" / "mt" / "both"
FeatureMode parse_feature_mode(std::string_view name);

struct QEModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
  FeatureMode mode = FeatureMode::Both;
  double ridge_lambda = 0.0;
};

// Per-side centroids for the Centered transform.
struct QECentroids {
  Centroid source;
  Centroid mt;
};

// Cosine distance between source and MT representation of every record.
// Centered subtracts each side's centroid (estimated from the records when
// `centroids` is absent); Projected maps the source into the MT space.
std::vector<double> distance_score(std::span<const QERecord> records, Transform transform,
                                   const LinearMap* map = nullptr,
                                   const QECentroids* centroids = nullptr);

// Sample Pearson correlation. ConstantInput if either series has no variance.
double pearson(std::span<const double> x, std::span<const double> y);

Eigen::MatrixXd qe_features(std::span<const QERecord> records, FeatureMode mode);

// Closed-form ridge regression of the labels on the selected features; the
// bias is not penalized.
QEModel train_qe(std::span<const QERecord> records, FeatureMode mode, double ridge_lambda);

std::vector<double> predict_qe(const QEModel& model, std::span<const QERecord> records);

std::vector<double> default_lambda_grid();  // 1e-3 ... 1e3, factor 10

struct LambdaSelection {
  QEModel model;                 // trained with the winning lambda
  std::vector<double> lambdas;
  std::vector<double> validation_pearson;
};

// Picks the lambda with the highest validation Pearson correlation (first
// wins on ties).
LambdaSelection select_qe_lambda(std::span<const QERecord> train, std::span<const QERecord> validation,
                                 FeatureMode mode,
                                 const std::vector<double>& grid = default_lambda_grid());

void save_qe_model(const QEModel& model, const std::filesystem::path& basename);
QEModel load_qe_model(const std::filesystem::path& basename);

}  // namespace lnprobe
