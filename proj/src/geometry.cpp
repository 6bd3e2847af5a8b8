#include "lnprobe/geometry.hpp"

#include <algorithm>
#include <string>

#include "least_squares.hpp"
#include "lnprobe/error.hpp"
#include "model_io.hpp"

namespace lnprobe {

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine distance of vectors of length " + std::to_string(u.size()) + " and " +
                    std::to_string(v.size()));
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) {
    throw Error(ErrorCode::ZeroVector, "cosine distance is undefined for a zero vector");
  }
  const double cosine = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return 1.0 - cosine;
}

Centroid compute_centroid(std::span<const SentenceRepr> reprs, std::string lang) {
  if (reprs.empty()) throw Error(ErrorCode::EmptyInput, "centroid of an empty set");
  const auto& first = reprs.front();
  Centroid c;
  c.lang = std::move(lang);
  c.layer = first.layer;
  c.source = first.source;
  c.vector = Eigen::VectorXd::Zero(first.vector.size());
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    const auto& r = reprs[i];
    if (r.layer != first.layer || r.source != first.source) {
      throw Error(ErrorCode::MixedProvenance,
                  "representation " + std::to_string(i) + " differs in layer or source");
    }
    if (r.vector.size() != first.vector.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "representation " + std::to_string(i) + " has dimension " +
                      std::to_string(r.vector.size()));
    }
    c.vector += r.vector;
  }
  c.vector /= static_cast<double>(reprs.size());
  c.sample_count = reprs.size();
  return c;
}

std::vector<SentenceRepr> center(std::span<const SentenceRepr> reprs, const Centroid& centroid) {
  std::vector<SentenceRepr> out;
  out.reserve(reprs.size());
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    if (reprs[i].vector.size() != centroid.vector.size()) {
      throw Error(ErrorCode::DimensionMismatch,
                  "representation " + std::to_string(i) + " has dimension " +
                      std::to_string(reprs[i].vector.size()) + ", centroid " +
                      std::to_string(centroid.vector.size()));
    }
    SentenceRepr r = reprs[i];
    r.vector -= centroid.vector;
    out.push_back(std::move(r));
  }
  return out;
}

LinearMap LinearMap::identity(std::size_t dim) {
  LinearMap map;
  const auto d = static_cast<Eigen::Index>(dim);
  map.weights = Eigen::MatrixXd::Identity(d, d);
  map.bias = Eigen::VectorXd::Zero(d);
  return map;
}

LinearMap fit_projection(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target,
                         double ridge_lambda) {
  auto fit = detail::solve_affine_least_squares(source, target, ridge_lambda);
  LinearMap map;
  map.weights = std::move(fit.weights);
  map.bias = std::move(fit.bias);
  map.ridge_lambda = ridge_lambda;
  return map;
}

Eigen::VectorXd apply_projection(const LinearMap& map, const Eigen::Ref<const Eigen::VectorXd>& repr) {
  if (repr.size() != map.weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "projection expects dimension " + std::to_string(map.weights.rows()) + ", got " +
                    std::to_string(repr.size()));
  }
  return map.weights.transpose() * repr + map.bias;
}

Eigen::MatrixXd apply_projection_rows(const LinearMap& map, const Eigen::MatrixXd& rows) {
  if (rows.cols() != map.weights.rows()) {
    throw Error(ErrorCode::DimensionMismatch,
                "projection expects dimension " + std::to_string(map.weights.rows()) + ", got " +
                    std::to_string(rows.cols()));
  }
  Eigen::MatrixXd out = rows * map.weights;
  out.rowwise() += map.bias.transpose();
  return out;
}

std::vector<SentenceRepr> project(std::span<const SentenceRepr> reprs, const LinearMap& map) {
  std::vector<SentenceRepr> out;
  out.reserve(reprs.size());
  for (const auto& r : reprs) {
    out.push_back(SentenceRepr{apply_projection(map, r.vector), r.source, r.layer});
  }
  return out;
}

Eigen::MatrixXd stack_rows(std::span<const SentenceRepr> reprs) {
  if (reprs.empty()) return {};
  const auto dim = reprs.front().vector.size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(reprs.size()), dim);
  for (std::size_t i = 0; i < reprs.size(); ++i) {
    if (reprs[i].vector.size() != dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "representation " + std::to_string(i) + " has dimension " +
                      std::to_string(reprs[i].vector.size()));
    }
    rows.row(static_cast<Eigen::Index>(i)) = reprs[i].vector.transpose();
  }
  return rows;
}

void save_linear_map(const LinearMap& map, const std::filesystem::path& basename) {
  nlohmann::json manifest = {
      {"format", "lnprobe-linear-map"},
      {"version", 1},
      {"source_lang", map.source_lang},
      {"target_lang", map.target_lang},
      {"ridge_lambda", map.ridge_lambda},
      {"input_dim", map.input_dim()},
      {"output_dim", map.output_dim()},
      {"layout", "weights row-major [input_dim x output_dim], then bias [output_dim]"},
  };
  std::vector<double> values;
  values.reserve(map.weights.size() + map.bias.size());
  for (Eigen::Index r = 0; r < map.weights.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.weights.cols(); ++c) values.push_back(map.weights(r, c));
  }
  for (Eigen::Index c = 0; c < map.bias.size(); ++c) values.push_back(map.bias(c));
  detail::save_model_pair(basename, std::move(manifest), values);
}

LinearMap load_linear_map(const std::filesystem::path& basename) {
  auto pair = detail::load_model_pair(basename, "lnprobe-linear-map");
  LinearMap map;
  try {
    const auto in = pair.manifest.at("input_dim").get<Eigen::Index>();
    const auto out = pair.manifest.at("output_dim").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(pair.values.size()) != in * out + out) {
      throw Error(ErrorCode::InvariantViolation, basename.string() + ": blob size does not match dims");
    }
    map.source_lang = pair.manifest.at("source_lang").get<std::string>();
    map.target_lang = pair.manifest.at("target_lang").get<std::string>();
    map.ridge_lambda = pair.manifest.at("ridge_lambda").get<double>();
    map.weights.resize(in, out);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < in; ++r) {
      for (Eigen::Index c = 0; c < out; ++c) map.weights(r, c) = pair.values[k++];
    }
    map.bias.resize(out);
    for (Eigen::Index c = 0; c < out; ++c) map.bias(c) = pair.values[k++];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, basename.string() + ".json: " + e.what());
  }
  return map;
}

}  // namespace lnprobe
