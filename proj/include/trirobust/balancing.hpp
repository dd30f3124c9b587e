#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/basis.hpp"
#include "trirobust/weights.hpp"

namespace trirobust {

struct BalancingOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
  int max_halvings = 30;
  double overflow_bound = 1e12;
};

struct LambdaSolve {
  Eigen::VectorXd lambda;
  std::vector<double> residual_history;  // max-norm of F at each iterate
  bool converged = false;
  int iterations = 0;
};

// Solves F(lambda) = n^{-1} sum_i [delta_i + t_i exp(b_i' lambda)] b_i - mean(b) = 0
// for nonnegative tilts t_i (zero at nonrespondents) by Newton's method with
// step halving on ||F||^2. F is the gradient of a convex potential, so the
// Jacobian n^{-1} sum t_i exp(b_i' lambda) b_i b_i' is positive semidefinite.
// All-zero tilts: returns lambda = 0 if F(0) = 0, else SingularJacobian.
LambdaSolve solve_tilted_lambda(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                                const Eigen::VectorXd& tilt,
                                const std::optional<Eigen::VectorXd>& start = std::nullopt,
                                const BalancingOptions& options = {});

// Calibration equation of the augmented propensity weights: tilt d_i - 1.
// `dhat` has length n; entries at nonrespondents are ignored.
LambdaSolve solve_aps_lambda(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                             const std::vector<std::uint8_t>& delta,
                             const BalancingOptions& options = {});

// The calibration map F(lambda) and its Jacobian (exposed for checks).
Eigen::VectorXd tilted_calibration_map(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                                       const Eigen::VectorXd& tilt, const Eigen::VectorXd& lambda);
Eigen::MatrixXd tilted_calibration_jacobian(const BasisMatrix& basis, const Eigen::VectorXd& tilt,
                                            const Eigen::VectorXd& lambda);

// omega_i = 1 + (d_i - 1) exp(b_i' lambda) over respondents.
WeightSet aps_weights(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                      const Eigen::VectorXd& lambda, const std::vector<std::uint8_t>& delta);

struct EntropyBalancingOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
  int max_halvings = 50;
  double divergence_bound = 1e3;
};

struct EntropyBalancing {
  WeightSet weights;
  Eigen::VectorXd lambda;  // multipliers of the non-intercept columns
  int iterations = 0;
};

// Entropy balancing with base weights d_i: omega_i = n d_i exp(b~_i' lambda) /
// sum_k delta_k d_k exp(b~_k' lambda), lambda over the non-intercept columns.
// The intercept row holds through the normalization, so sum delta omega = n.
// Throws Infeasible when the dual diverges, SingularJacobian when the initial
// Hessian is singular.
EntropyBalancing solve_entropy_balancing(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                                         const std::vector<std::uint8_t>& delta,
                                         const EntropyBalancingOptions& options = {});

// beta = {sum delta (omega - 1) b b'}^{-1} sum delta (omega - 1) b y.
// `outcomes` has length n (entries at nonrespondents ignored).
Eigen::VectorXd ibc_beta(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                         const WeightSet& weights, const std::vector<std::uint8_t>& delta);

}  // namespace trirobust
