#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lnprobe/embstore.hpp"

namespace lnprobe {

// 1 - cos(u, v), in [0, 2]. Throws ZeroVector if either norm is zero.
double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& v);

struct Centroid {
  std::string lang;
  std::size_t layer = 0;
  ReprSource source = ReprSource::MeanPool;
  Eigen::VectorXd vector;
  std::size_t sample_count = 0;
};

// Mean of the representations. All inputs must share layer, source and
// dimension (MixedProvenance / DimensionMismatch otherwise).
Centroid compute_centroid(std::span<const SentenceRepr> reprs, std::string lang = {});

// Subtracts the centroid from every representation, preserving order.
std::vector<SentenceRepr> center(std::span<const SentenceRepr> reprs, const Centroid& centroid);

// Affine map x -> x * weights + bias from a source space into a target space.
struct LinearMap {
  Eigen::MatrixXd weights;  // [input_dim x output_dim]
  Eigen::VectorXd bias;     // [output_dim]
  std::string source_lang;
  std::string target_lang;
  double ridge_lambda = 0.0;

  std::size_t input_dim() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weights.cols()); }

  static LinearMap identity(std::size_t dim);
};

// Least-squares fit of target ~ source * W + b with a ridge penalty on W
// (the bias is never penalized). Rows of the two matrices are paired.
// Solved with column-pivoted Householder QR on the bias-augmented system;
// throws DegenerateSystem (with the numerical rank) if lambda == 0 and the
// system is rank deficient.
LinearMap fit_projection(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target,
                         double ridge_lambda = 0.0);

Eigen::VectorXd apply_projection(const LinearMap& map, const Eigen::Ref<const Eigen::VectorXd>& repr);

// Row-wise application to a [N x input_dim] matrix.
Eigen::MatrixXd apply_projection_rows(const LinearMap& map, const Eigen::MatrixXd& rows);

std::vector<SentenceRepr> project(std::span<const SentenceRepr> reprs, const LinearMap& map);

// Stacks representation vectors as rows of an [N x D] matrix.
Eigen::MatrixXd stack_rows(std::span<const SentenceRepr> reprs);

// <basename>.json manifest + <basename>.bin little-endian f64 blob
// (weights row-major, then bias).
void save_linear_map(const LinearMap& map, const std::filesystem::path& basename);
LinearMap load_linear_map(const std::filesystem::path& basename);

}  // namespace lnprobe
