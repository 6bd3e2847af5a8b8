#pragma once

#include <Eigen/Core>

namespace lnprobe::detail {

struct AffineFit {
  Eigen::MatrixXd weights;  // [features x outputs]
  Eigen::VectorXd bias;     // [outputs]
};

// argmin_{W,b} ||X W + 1 b^T - Y||_F^2 + lambda ||W||_F^2.
AffineFit solve_affine_least_squares(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                                     double lambda);

}  // namespace lnprobe::detail
