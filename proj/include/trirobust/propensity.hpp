#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/dataset.hpp"

namespace trirobust {

enum class PropensityMethod { Mle, TanCalibrated, FullResponse };

// Working logistic propensity model logit pi_0(x; phi) = phi' x~.
struct PropensityFit {
  Eigen::VectorXd phi;
  Eigen::VectorXd fitted;  // pi_0(x_i; phi_hat), in (0, 1) except FullResponse (== 1)
  PropensityMethod method = PropensityMethod::Mle;
  Eigen::MatrixXd design;  // n x p_phi
  int iterations = 0;
  // Mle: max-norm of n^{-1} sum (delta_i - pi_i) x~_i.
  // TanCalibrated: max-norm of n^{-1} sum (delta_i / pi_i - 1) x~_i.
  double score_residual = 0.0;

  std::size_t n() const { return static_cast<std::size_t>(fitted.size()); }
  // d_i = 1 / pi_i with pi clipped to [1e-10, 1 - 1e-10] (FullResponse: 1).
  Eigen::VectorXd dhat() const;
};

struct NewtonOptions {
  double tolerance = 1e-10;
  int max_iterations = 100;
  int max_halvings = 50;
  double separation_bound = 30.0;
};

// (1, x_1, ..., x_p).
Eigen::MatrixXd default_design(const Dataset& dataset);
// (1, x_c for c in columns).
Eigen::MatrixXd design_from_columns(const Dataset& dataset, const std::vector<std::size_t>& columns);

double logistic(double eta);
// Bernoulli log-likelihood of the logistic model.
double log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& delta,
                      const Eigen::VectorXd& phi);
// sum_i [delta_i exp(-phi' f_i) + (1 - delta_i) phi' f_i]
double tan_calibration_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& delta,
                            const Eigen::VectorXd& phi);

// Newton-Raphson on the log-likelihood. Throws SeparationDetected when any
// |phi_j| exceeds the bound, SingularHessian, MaxIterationsExceeded.
PropensityFit fit_logistic_mle(const Dataset& dataset, const Eigen::MatrixXd& design,
                               const NewtonOptions& options = {});

// Minimizes the calibration loss; the first-order condition is
// sum delta_i / pi_i x~_i = sum x~_i. Throws Unbounded (including the full
// response case), SingularHessian, MaxIterationsExceeded.
PropensityFit fit_tan_calibrated(const Dataset& dataset, const Eigen::MatrixXd& design,
                                 const NewtonOptions& options = {});

// pi == 1 for every unit; used when nothing is missing.
PropensityFit full_response_fit(const Eigen::MatrixXd& design);

// h(x_i; phi) = pi_0(x_i; phi) x~_i, which turns the generic estimating
// equation for phi into the logistic score equation.
Eigen::VectorXd h_function(const PropensityFit& fit, std::size_t row);

// d/dphi logit pi_0(x_i; phi) = x~_i.
Eigen::VectorXd logit_gradient(const PropensityFit& fit, std::size_t row);

}  // namespace trirobust
