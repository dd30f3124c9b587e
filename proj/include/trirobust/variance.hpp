#pragma once

#include <string>

#include <Eigen/Dense>

#include "trirobust/basis.hpp"
#include "trirobust/dataset.hpp"
#include "trirobust/gamma_robust.hpp"
#include "trirobust/propensity.hpp"

namespace trirobust {

enum class InfluenceKind { T1, T2 };

struct InfluenceVector {
  InfluenceKind kind = InfluenceKind::T1;
  Eigen::VectorXd values;  // eta_i, centered by theta_hat (the -theta term included)
  double theta = 0.0;      // theta_hat used for the -theta term
  Eigen::VectorXd kappa;
  Eigen::VectorXd mu, zeta;  // T2 only
  double nu = 0.0;           // T2 only

  // n^{-1} sum (eta_i + theta): reproduces theta_hat when every nuisance
  // equation holds.
  double plugin_mean() const;
};

// n^{-2} sum (eta_i - mean eta)^2.
double variance_from_influence(const Eigen::VectorXd& values);
double variance_from_influence(const InfluenceVector& influence);

// --- Augmented propensity weights -------------------------------------------

// A kappa = c with A = sum delta (d-1) x~ h', c = sum delta (d-1) g r x~,
// g = exp(b' lambda), r = y - b' beta. Throws SingularSystem.
Eigen::VectorXd solve_kappa_t1(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                               const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta);

// Left side of the kappa equation at an arbitrary kappa (used to verify roots).
Eigen::VectorXd kappa_t1_equation(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& kappa);

// eta_i = b' beta - theta + delta omega (y - b' beta) + (1 - delta d) h' kappa.
InfluenceVector influence_t1(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                             const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double theta,
                             const Eigen::VectorXd& kappa);

// --- Robust weights ------------------------------------------------------------

// Gradient blocks of the linearized functional
//   Phi = n^{-1} sum [b'mu + delta omega (y - b'mu) + w r b'zeta + w nu (r^2 - c)],
// w = delta (d-1) g q, c = sigma2 / (1 + gamma), with respect to lambda (row 1),
// beta (row 2) and sigma2 (row 3). Every block is normalized by 1/n.
struct SMatrices {
  Eigen::VectorXd s10, s20;
  double s30 = 0.0;
  Eigen::MatrixXd s11, s12, s21, s22;
  Eigen::VectorXd s13, s23;
  Eigen::RowVectorXd s31, s32;
  double s33 = 0.0;

  // Assembled (2p+1) x (2p+1) system and right-hand side -(s10, s20, s30).
  Eigen::MatrixXd system() const;
  Eigen::VectorXd rhs() const;
};

SMatrices compute_s_matrices(const Dataset& dataset, const BasisMatrix& basis, const GammaFit& fit,
                             const Eigen::VectorXd& dhat);

// The functional Phi itself at arbitrary (lambda, beta, sigma2) for fixed
// multipliers; its gradient is s_k0 + s_k1 mu + s_k2 zeta + s_k3 nu.
double t2_functional(const Dataset& dataset, const BasisMatrix& basis, const Eigen::VectorXd& dhat, double gamma,
                     const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double sigma2,
                     const Eigen::VectorXd& mu, const Eigen::VectorXd& zeta, double nu);

struct NuisanceT2 {
  Eigen::VectorXd mu, zeta;
  double nu = 0.0;
  double condition = 0.0;
};

// Solves the stationarity system for (mu, zeta, nu). Throws SingularSystem
// (message carries the condition number).
NuisanceT2 solve_nuisance_t2(const Dataset& dataset, const BasisMatrix& basis, const GammaFit& fit,
                             const Eigen::VectorXd& dhat);

// kappa = -M^{-1} v with
//   v = n^{-1} sum delta (d-1) g q [(y - b'mu) + r b'zeta + nu (r^2 - c)] x~
//   M = n^{-1} sum [(delta d - 1) pi (1 - pi) - delta (d-1) pi] x~ x~'
// so the phi-gradient of Phi + n^{-1} sum (1 - delta d) h' kappa vanishes.
Eigen::VectorXd solve_kappa_t2(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                               const GammaFit& gamma_fit, const NuisanceT2& nuisance);

// The phi-gradient at an arbitrary kappa (used to verify the solve).
Eigen::VectorXd kappa_t2_equation(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  const GammaFit& gamma_fit, const NuisanceT2& nuisance,
                                  const Eigen::VectorXd& kappa);

// eta_i = b'mu - theta + delta omega_g (y - b'mu) + (1 - delta d) kappa' h
//         + w r b'zeta + w nu (r^2 - c).
InfluenceVector influence_t2(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                             const GammaFit& gamma_fit, const NuisanceT2& nuisance, const Eigen::VectorXd& kappa,
                             double theta);

}  // namespace trirobust
