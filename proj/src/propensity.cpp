#include "trirobust/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "trirobust/error.hpp"
#include "trirobust/linalg.hpp"

namespace trirobust {

namespace {

constexpr double kClip = 1e-10;

// log(1 + e^eta) without overflow.
double softplus(double eta) {
  return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

void check_design(const Dataset& dataset, const Eigen::MatrixXd& design) {
  validate(dataset);
  if (static_cast<std::size_t>(design.rows()) != dataset.n()) {
    throw Error(ErrorCode::ShapeMismatch, "design rows must equal n");
  }
  if (design.cols() == 0) throw Error(ErrorCode::ShapeMismatch, "design has no columns");
  if (design.rows() < design.cols()) {
    throw Error(ErrorCode::SingularHessian, "fewer observations than propensity parameters");
  }
  if (!design.allFinite()) throw Error(ErrorCode::InvalidArgument, "design contains non-finite values");
}

Eigen::VectorXd fitted_probabilities(const Eigen::MatrixXd& design, const Eigen::VectorXd& phi) {
  const Eigen::VectorXd eta = design * phi;
  return eta.unaryExpr([](double e) { return logistic(e); });
}

}  // namespace

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

Eigen::VectorXd PropensityFit::dhat() const {
  if (method == PropensityMethod::FullResponse) return Eigen::VectorXd::Ones(fitted.size());
  return fitted.unaryExpr([](double p) { return 1.0 / std::clamp(p, kClip, 1.0 - kClip); });
}

Eigen::MatrixXd default_design(const Dataset& dataset) {
  std::vector<std::size_t> cols(static_cast<std::size_t>(dataset.covariates.cols()));
  for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
  return design_from_columns(dataset, cols);
}

Eigen::MatrixXd design_from_columns(const Dataset& dataset, const std::vector<std::size_t>& columns) {
  Eigen::MatrixXd design(dataset.covariates.rows(), static_cast<Eigen::Index>(columns.size() + 1));
  design.col(0).setOnes();
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (static_cast<Eigen::Index>(columns[k]) >= dataset.covariates.cols()) {
      throw Error(ErrorCode::MissingColumn, "propensity design column out of range", std::nullopt, columns[k]);
    }
    design.col(static_cast<Eigen::Index>(k + 1)) = dataset.covariates.col(static_cast<Eigen::Index>(columns[k]));
  }
  return design;
}

double log_likelihood(const Eigen::MatrixXd& design, const Eigen::VectorXd& delta,
                      const Eigen::VectorXd& phi) {
  const Eigen::VectorXd eta = design * phi;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += delta(i) * eta(i) - softplus(eta(i));
  return ll;
}

double tan_calibration_loss(const Eigen::MatrixXd& design, const Eigen::VectorXd& delta,
                            const Eigen::VectorXd& phi) {
  const Eigen::VectorXd eta = design * phi;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    loss += delta(i) > 0.0 ? std::exp(-eta(i)) : eta(i);
  }
  return loss;
}

PropensityFit fit_logistic_mle(const Dataset& dataset, const Eigen::MatrixXd& design,
                               const NewtonOptions& options) {
  check_design(dataset, design);
  const Eigen::VectorXd delta = dataset.delta_vector();
  const double n = static_cast<double>(dataset.n());
  const Eigen::Index p = design.cols();

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
  double ll = log_likelihood(design, delta, phi);

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd pi = fitted_probabilities(design, phi);
    const Eigen::VectorXd score = design.transpose() * (delta - pi);
    const double residual = linalg::max_abs(score) / n;
    const Eigen::VectorXd w = pi.array() * (1.0 - pi.array());
    const Eigen::MatrixXd info = design.transpose() * w.asDiagonal() * design;
    Eigen::VectorXd step;
    try {
      step = linalg::solve_spd_checked(info, score, ErrorCode::SingularHessian);
    } catch (const Error&) {
      // A vanishing information matrix after some progress means the fitted
      // probabilities have run to 0/1.
      if (iter > 0 && linalg::max_abs(design * phi) > 10.0) {
        throw Error(ErrorCode::SeparationDetected, "fitted probabilities reach 0 or 1 (separation)");
      }
      throw;
    }
    // Under separation the score decays while Newton keeps taking unit-size
    // steps, so convergence requires a small step as well.
    if (residual <= options.tolerance && linalg::max_abs(step) <= 1e-6 * (1.0 + linalg::max_abs(phi))) {
      return PropensityFit{phi, pi, PropensityMethod::Mle, design, iter, residual};
    }
    if (iter == options.max_iterations) break;

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = phi + t * step;
      const double trial_ll = log_likelihood(design, delta, trial);
      if (std::isfinite(trial_ll) && trial_ll >= ll - 1e-12 * std::fabs(ll)) {
        phi = trial;
        ll = trial_ll;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw Error(ErrorCode::MaxIterationsExceeded, "logistic MLE line search failed");
    if (linalg::max_abs(phi) > options.separation_bound) {
      throw Error(ErrorCode::SeparationDetected,
                  "logistic coefficients diverge (complete or quasi-complete separation)");
    }
  }
  throw Error(ErrorCode::MaxIterationsExceeded, "logistic MLE did not converge");
}

PropensityFit fit_tan_calibrated(const Dataset& dataset, const Eigen::MatrixXd& design,
                                 const NewtonOptions& options) {
  check_design(dataset, design);
  if (dataset.full_response()) {
    throw Error(ErrorCode::Unbounded, "calibration loss is unbounded below without nonrespondents");
  }
  const Eigen::VectorXd delta = dataset.delta_vector();
  const double n = static_cast<double>(dataset.n());
  const Eigen::Index p = design.cols();

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(p);
  double loss = tan_calibration_loss(design, delta, phi);

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    const Eigen::VectorXd eta = design * phi;
    Eigen::VectorXd e(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) e(i) = delta(i) > 0.0 ? std::exp(-eta(i)) : 0.0;
    // grad = sum [ -delta e^{-eta} + (1 - delta) ] f
    const Eigen::VectorXd grad = design.transpose() * ((Eigen::VectorXd::Ones(eta.size()) - delta) - e);
    const double residual = linalg::max_abs(grad) / n;
    if (residual <= options.tolerance) {
      return PropensityFit{phi, fitted_probabilities(design, phi), PropensityMethod::TanCalibrated,
                           design, iter, residual};
    }
    if (iter == options.max_iterations) break;

    const Eigen::MatrixXd hess = design.transpose() * e.asDiagonal() * design;
    const Eigen::VectorXd step = linalg::solve_spd_checked(hess, -grad, ErrorCode::SingularHessian);

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = phi + t * step;
      const double trial_loss = tan_calibration_loss(design, delta, trial);
      if (std::isfinite(trial_loss) && trial_loss <= loss + 1e-12 * std::fabs(loss)) {
        phi = trial;
        loss = trial_loss;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw Error(ErrorCode::Unbounded, "calibration loss line search cannot make progress");
    if (linalg::max_abs(phi) > 50.0) {
      throw Error(ErrorCode::Unbounded, "calibration coefficients diverge; loss is unbounded");
    }
  }
  throw Error(ErrorCode::MaxIterationsExceeded, "calibrated propensity fit did not converge");
}

PropensityFit full_response_fit(const Eigen::MatrixXd& design) {
  return PropensityFit{Eigen::VectorXd(0), Eigen::VectorXd::Ones(design.rows()),
                       PropensityMethod::FullResponse, design, 0, 0.0};
}

Eigen::VectorXd h_function(const PropensityFit& fit, std::size_t row) {
  const auto i = static_cast<Eigen::Index>(row);
  return fit.fitted(i) * fit.design.row(i).transpose();
}

Eigen::VectorXd logit_gradient(const PropensityFit& fit, std::size_t row) {
  return fit.design.row(static_cast<Eigen::Index>(row)).transpose();
}

}  // namespace trirobust
