#pragma once

#include <Eigen/Dense>

#include "trirobust/error.hpp"

namespace trirobust::linalg {

// Condition number (2-norm) of A after row/column equilibration, so blocks
// living on different scales do not read as ill-conditioned.
double equilibrated_condition(const Eigen::MatrixXd& A);

// Solves A x = b. Throws `code` when A is not square or its equilibrated
// condition number exceeds `max_condition`.
Eigen::VectorXd solve_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              ErrorCode code, double max_condition = 1e10,
                              double* condition_out = nullptr);

// Symmetric positive semidefinite variant (Newton Hessians, normal equations).
Eigen::VectorXd solve_spd_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                  ErrorCode code, double max_condition = 1e12);

inline double max_abs(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

}  // namespace trirobust::linalg
