#pragma once

#include <Eigen/Dense>

namespace netnewton {

// Minimizer of the penalized problem, or the stacked consensus point of the
// constrained problem when produced by solve_constrained_reference.
struct Reference {
  Eigen::VectorXd x_star;
  double F_star = 0.0;
  double solver_residual = 0.0;
  int iterations = 0;
};

}  // namespace netnewton
