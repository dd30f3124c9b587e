#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/basis.hpp"

namespace trirobust {

// Per-respondent weights and the estimator that produced them.
struct WeightSet {
  std::vector<std::size_t> rows;  // respondent row indices, ascending
  Eigen::VectorXd weights;        // parallel to rows (length n_1)
  std::string source;
  double calibration_residual = 0.0;

  // n-vector with zeros at nonrespondents.
  Eigen::VectorXd full_length(std::size_t n) const;
};

// max_j | n^{-1} sum_i delta_i w_i b_ij - n^{-1} sum_i b_ij |
double calibration_residual(const BasisMatrix& basis, const WeightSet& weights);

// Same, for an n-vector of weights already multiplied by delta.
double calibration_residual(const BasisMatrix& basis, const Eigen::VectorXd& delta_weights);

// Packs an n-vector (entries at nonrespondents ignored) into a WeightSet and
// records its calibration residual against `basis`.
WeightSet make_weight_set(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                          const Eigen::VectorXd& full_weights, std::string source);

// Converged parameter block shared by the APS and gamma solvers.
struct FitState {
  Eigen::VectorXd phi;
  Eigen::VectorXd lambda;
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  double gamma = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

}  // namespace trirobust
