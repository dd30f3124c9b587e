#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/balancing.hpp"
#include "trirobust/basis.hpp"
#include "trirobust/weights.hpp"

namespace trirobust {

// exp(-gamma r^2 / (2 sigma2)).
double q_weight(double residual, double sigma2, double gamma);

struct GammaOptions {
  double parameter_tolerance = 1e-10;  // max change of (beta, sigma2, lambda) per sweep
  double residual_tolerance = 1e-9;    // calibration / beta / sigma2 equations at exit
  int max_outer_iterations = 200;
  BalancingOptions balancing{};
};

struct GammaFit {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  Eigen::VectorXd lambda;
  double gamma = 0.0;
  Eigen::VectorXd q;  // length n; q_i at respondents, 0 at nonrespondents
  int outer_iterations = 0;
  bool converged = false;
  bool degenerate_sigma = false;  // every residual was zero; sigma2 pinned at 1e-8
  double calibration_residual = 0.0;
  double beta_residual = 0.0;   // max |n^{-1} sum w q r b|
  double sigma_residual = 0.0;  // |n^{-1} sum w q (r^2 - sigma2/(1+gamma))|
};

// Block coordinate solve of the robust system for fixed gamma:
//   (a) beta  : weighted least squares, weights delta (d-1) g q
//   (b) sigma2: root of sum delta (d-1) g q (r^2 - sigma2/(1+gamma)) = 0
//               nearest the previous value
//   (c) lambda: calibration with tilt delta (d-1) q, warm-started
// gamma = 0 reproduces the APS multipliers and the IBC beta. With no unit to
// reweight (all d_i = 1) the fit is the plain robust regression with lambda = 0.
// Throws NonConvergence, WeightOverflow, SingularNormalEquations,
// BracketFailure, InvalidArgument.
GammaFit solve_gamma_system(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                            const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                            double gamma, const GammaOptions& options = {});

// omega_i = 1 + (d_i - 1) exp(b_i' lambda) q_i.
WeightSet gamma_weights(const GammaFit& fit, const Eigen::VectorXd& dhat, const BasisMatrix& basis,
                        const std::vector<std::uint8_t>& delta);

// -(2 pi sigma2)^{-gamma / (2 (1 + gamma))} n^{-1} sum delta (d-1) g exp(-gamma r^2 / (2 sigma2)).
// Its (beta, sigma2)-stationarity conditions at fixed lambda are steps (a), (b).
double gamma_objective(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                       const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                       const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double sigma2,
                       double gamma);

struct CvOptions {
  int folds = 5;
  std::uint64_t seed = 1;
  GammaOptions gamma{};
};

struct CvPoint {
  double gamma = 0.0;
  double mspe = 0.0;  // summed squared prediction error over evaluated respondents
  std::size_t n_eval = 0;
  int folds_ok = 0;
};

struct CvResult {
  double selected = 0.0;
  std::vector<CvPoint> profile;  // grid order
  std::vector<std::string> warnings;
};

// Folds stratified on delta, assigned by a seeded shuffle. Each complement is
// fitted with its own basis means and d restricted to it; held-out
// respondents contribute (y - b' beta)^2. Failed folds are skipped with a
// warning; gamma is chosen by mean MSPE per evaluated respondent, ties to the
// smallest gamma. Throws AllFoldsFailed when no fold fits for any gamma.
CvResult select_gamma_cv(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                         const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                         const std::vector<double>& grid, const CvOptions& options = {});

// Fold label in [0, folds) for every row; exposed for tests.
std::vector<int> stratified_folds(const std::vector<std::uint8_t>& delta, int folds, std::uint64_t seed);

}  // namespace trirobust
