#include "least_squares.hpp"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "lnprobe/error.hpp"

namespace lnprobe::detail {

AffineFit solve_affine_least_squares(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets,
                                     double lambda) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n < 1) throw Error(ErrorCode::EmptyInput, "least-squares fit needs at least one row");
  if (targets.rows() != n) {
    throw Error(ErrorCode::LengthMismatch, "feature rows " + std::to_string(n) +
                                               " vs target rows " + std::to_string(targets.rows()));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvariantViolation, "ridge lambda must be finite and >= 0");
  }

  // The bias column is last; the ridge rows sqrt(lambda) * I only touch W.
  const Eigen::Index ridge_rows = lambda > 0.0 ? d : 0;
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + ridge_rows, d + 1);
  system.topLeftCorner(n, d) = features;
  system.block(0, d, n, 1).setOnes();
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + ridge_rows, targets.cols());
  rhs.topRows(n) = targets;
  if (ridge_rows > 0) {
    system.bottomLeftCorner(d, d).diagonal().setConstant(std::sqrt(lambda));
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system);
  qr.setThreshold(1e-12);
  if (qr.rank() < d + 1) {
    throw Error(ErrorCode::DegenerateSystem,
                "normal system is singular: rank " + std::to_string(qr.rank()) + " < " +
                    std::to_string(d + 1) + " (use a positive ridge lambda)");
  }
  const Eigen::MatrixXd solution = qr.solve(rhs);
  return AffineFit{solution.topRows(d), solution.row(d).transpose()};
}

}  // namespace lnprobe::detail
