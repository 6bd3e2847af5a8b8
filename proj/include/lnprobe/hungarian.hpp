#pragma once

#include <vector>

#include <Eigen/Core>

namespace lnprobe {

// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres with
// potentials, O(n^3)). Returns the column assigned to each row.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace lnprobe
