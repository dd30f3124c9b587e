#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/balancing.hpp"
#include "trirobust/basis.hpp"
#include "trirobust/dataset.hpp"
#include "trirobust/error.hpp"
#include "trirobust/gamma_robust.hpp"
#include "trirobust/propensity.hpp"
#include "trirobust/weights.hpp"

namespace trirobust {

enum class EstimatorKind { CC, GLM, HM, Tan, APS, APSGamma };

struct EstimatorId {
  EstimatorKind kind = EstimatorKind::CC;
  std::optional<double> gamma;  // APSGamma: fixed value, or nullopt for cross-validation

  // CC, GLM, HM, Tan, APS, APSgamma:<value>, APSgamma:cv. Throws ConfigError.
  static EstimatorId parse(const std::string& tag);
  std::string tag() const;

  friend bool operator==(const EstimatorId&, const EstimatorId&) = default;
};

// CC, GLM, HM, Tan, APS, APSgamma:0.5
std::vector<EstimatorId> default_roster();

constexpr double kNormalQuantile975 = 1.959964;

struct EstimateReport {
  std::string tag;
  double theta = 0.0;
  std::optional<double> variance;
  std::optional<std::pair<double, double>> ci95;
  std::optional<double> gamma_used;
  bool converged = false;
  std::optional<ErrorCode> error;
  std::string message;  // error text or notes

  // Weighting-form estimators.
  WeightSet weights;
  double calibration_residual = 0.0;
  // APS / APSgamma: imputation form n^{-1} sum {delta y + (1-delta) b'beta}
  // and |sum delta omega y - sum {delta y + (1-delta) b'beta}|.
  std::optional<double> imputation_theta;
  double dual_form_gap = 0.0;

  FitState state;                   // phi, lambda, beta, sigma2, gamma, iterations
  std::optional<CvResult> cv;       // APSgamma:cv
  std::optional<Eigen::VectorXd> influence;

  // Sets variance and the matching 95% interval.
  void set_variance(double v);
  std::string diagnostics() const;
};

struct EstimationOptions {
  bool with_variance = true;
  GammaOptions gamma{};
  std::vector<double> cv_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  CvOptions cv{};
  NewtonOptions newton{};
  BalancingOptions balancing{};
  EntropyBalancingOptions entropy{};
};

EstimateReport estimate_cc(const Dataset& dataset);
// n^{-1} sum delta d y.
EstimateReport estimate_ipw(const Dataset& dataset, const PropensityFit& fit);
EstimateReport estimate_aps(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                            const EstimationOptions& options = {});
// gamma: fixed value, or nullopt to select it by cross-validation over options.cv_grid.
EstimateReport estimate_aps_gamma(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  std::optional<double> gamma, const EstimationOptions& options = {});
EstimateReport estimate_hm(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                           const EstimationOptions& options = {});
EstimateReport estimate_tan(const Dataset& dataset, const Eigen::MatrixXd& design,
                            const EstimationOptions& options = {});

// Runs every estimator of the roster on one dataset. The logistic fit is shared;
// a failing solver marks only the estimators that depend on it (error set,
// converged false), the rest are still computed.
std::vector<EstimateReport> estimate_all(const Dataset& dataset, const BasisMatrix& basis,
                                         const Eigen::MatrixXd& design, const std::vector<EstimatorId>& roster,
                                         const EstimationOptions& options = {});

}  // namespace trirobust
