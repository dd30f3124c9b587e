#include "trirobust/estimators.hpp"

#include <cmath>
#include <sstream>

#include "trirobust/format.hpp"
#include "trirobust/variance.hpp"

namespace trirobust {

EstimatorId EstimatorId::parse(const std::string& tag) {
  if (tag == "CC") return {EstimatorKind::CC, std::nullopt};
  if (tag == "GLM") return {EstimatorKind::GLM, std::nullopt};
  if (tag == "HM") return {EstimatorKind::HM, std::nullopt};
  if (tag == "Tan") return {EstimatorKind::Tan, std::nullopt};
  if (tag == "APS") return {EstimatorKind::APS, std::nullopt};
  const std::string prefix = "APSgamma:";
  if (tag.rfind(prefix, 0) == 0) {
    const std::string value = tag.substr(prefix.size());
    if (value == "cv") return {EstimatorKind::APSGamma, std::nullopt};
    const auto g = parse_number(value);
    if (g && *g >= 0.0 && std::isfinite(*g)) return {EstimatorKind::APSGamma, *g};
    throw Error(ErrorCode::ConfigError, "gamma in '" + tag + "' must be a number >= 0 or 'cv'");
  }
  throw Error(ErrorCode::ConfigError,
              "unknown estimator '" + tag + "' (expected CC, GLM, HM, Tan, APS, APSgamma:<g>, APSgamma:cv)");
}

std::string EstimatorId::tag() const {
  switch (kind) {
    case EstimatorKind::CC: return "CC";
    case EstimatorKind::GLM: return "GLM";
    case EstimatorKind::HM: return "HM";
    case EstimatorKind::Tan: return "Tan";
    case EstimatorKind::APS: return "APS";
    case EstimatorKind::APSGamma: return "APSgamma:" + (gamma ? format_number(*gamma) : std::string("cv"));
  }
  return "?";
}

std::vector<EstimatorId> default_roster() {
  return {{EstimatorKind::CC, std::nullopt},  {EstimatorKind::GLM, std::nullopt},
          {EstimatorKind::HM, std::nullopt},  {EstimatorKind::Tan, std::nullopt},
          {EstimatorKind::APS, std::nullopt}, {EstimatorKind::APSGamma, 0.5}};
}

void EstimateReport::set_variance(double v) {
  variance = v;
  const double half = kNormalQuantile975 * std::sqrt(v);
  ci95 = std::make_pair(theta - half, theta + half);
}

std::string EstimateReport::diagnostics() const {
  std::ostringstream out;
  out << "iterations=" << state.iterations;
  if (!weights.rows.empty()) out << ";calibration_residual=" << format_number(calibration_residual);
  if (imputation_theta) out << ";dual_form_gap=" << format_number(dual_form_gap);
  if (state.gamma > 0.0) out << ";sigma2=" << format_number(state.sigma2);
  if (cv) out << ";cv_warnings=" << cv->warnings.size();
  if (error) out << ";error=" << to_string(*error);
  if (!message.empty()) out << ";note=" << message;
  return out.str();
}

namespace {

double weighted_mean(const Dataset& dataset, const WeightSet& ws) {
  double s = 0.0;
  for (std::size_t k = 0; k < ws.rows.size(); ++k) {
    s += ws.weights(static_cast<Eigen::Index>(k)) * dataset.observed_outcome(ws.rows[k]);
  }
  return s / static_cast<double>(dataset.n());
}

double sample_mean(const Dataset& dataset) {
  double s = 0.0;
  for (std::size_t i = 0; i < dataset.n(); ++i) s += dataset.observed_outcome(i);
  return s / static_cast<double>(dataset.n());
}

// Full response: every weighting estimator collapses to the sample mean with
// unit weights and eta_i = y_i - theta.
EstimateReport full_response_report(const Dataset& dataset, const BasisMatrix* basis, std::string tag,
                                    bool with_variance) {
  EstimateReport rep;
  rep.tag = std::move(tag);
  rep.theta = sample_mean(dataset);
  rep.converged = true;
  rep.message = "full response";
  if (basis) {
    rep.weights = make_weight_set(*basis, dataset.delta, Eigen::VectorXd::Ones(basis->rows()), rep.tag);
    rep.calibration_residual = rep.weights.calibration_residual;
    rep.state.lambda = Eigen::VectorXd::Zero(basis->dim());
  }
  if (with_variance) {
    Eigen::VectorXd eta = dataset.outcome_filled().array() - rep.theta;
    rep.set_variance(variance_from_influence(eta));
    rep.influence = std::move(eta);
  }
  return rep;
}

// Imputation form and the gap to the weighting form (both in sum scale).
void attach_imputation(EstimateReport& rep, const Dataset& dataset, const BasisMatrix& basis,
                       const Eigen::VectorXd& beta) {
  double imputed = 0.0;
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    imputed += dataset.delta[i] ? dataset.observed_outcome(i)
                                : basis.values.row(static_cast<Eigen::Index>(i)).dot(beta);
  }
  const double n = static_cast<double>(dataset.n());
  rep.imputation_theta = imputed / n;
  rep.dual_form_gap = std::fabs(rep.theta * n - imputed);
  if (rep.dual_form_gap > 1e-6 * n) {
    rep.converged = false;
    rep.message = "weighting and imputation forms disagree";
  }
}

}  // namespace

EstimateReport estimate_cc(const Dataset& dataset) {
  validate(dataset);
  EstimateReport rep;
  rep.tag = "CC";
  double s = 0.0;
  for (std::size_t i : dataset.respondent_rows()) s += dataset.observed_outcome(i);
  rep.theta = s / static_cast<double>(dataset.n_respondents());
  rep.converged = true;
  return rep;
}

EstimateReport estimate_ipw(const Dataset& dataset, const PropensityFit& fit) {
  validate(dataset);
  if (fit.n() != dataset.n()) throw Error(ErrorCode::ShapeMismatch, "propensity fit does not match dataset");
  EstimateReport rep;
  rep.tag = "GLM";
  const Eigen::VectorXd d = fit.dhat();
  double s = 0.0;
  for (std::size_t i : dataset.respondent_rows()) s += d(static_cast<Eigen::Index>(i)) * dataset.observed_outcome(i);
  rep.theta = s / static_cast<double>(dataset.n());
  rep.state.phi = fit.phi;
  rep.state.iterations = fit.iterations;
  rep.state.converged = rep.converged = true;
  return rep;
}

EstimateReport estimate_aps(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                            const EstimationOptions& options) {
  validate(dataset);
  if (dataset.full_response()) {
    EstimateReport rep = full_response_report(dataset, &basis, "APS", options.with_variance);
    rep.state.beta = Eigen::VectorXd::Zero(basis.dim());
    rep.imputation_theta = rep.theta;
    return rep;
  }
  EstimateReport rep;
  rep.tag = "APS";
  const Eigen::VectorXd d = fit.dhat();
  const LambdaSolve ls = solve_aps_lambda(basis, d, dataset.delta, options.balancing);
  rep.weights = aps_weights(basis, d, ls.lambda, dataset.delta);
  rep.calibration_residual = rep.weights.calibration_residual;
  rep.theta = weighted_mean(dataset, rep.weights);
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd beta = ibc_beta(basis, y, rep.weights, dataset.delta);

  rep.state.phi = fit.phi;
  rep.state.lambda = ls.lambda;
  rep.state.beta = beta;
  rep.state.iterations = ls.iterations;
  rep.state.converged = rep.converged = true;
  attach_imputation(rep, dataset, basis, beta);

  if (options.with_variance) {
    try {
      const Eigen::VectorXd kappa = solve_kappa_t1(dataset, basis, fit, ls.lambda, beta);
      InfluenceVector infl = influence_t1(dataset, basis, fit, ls.lambda, beta, rep.theta, kappa);
      rep.set_variance(variance_from_influence(infl));
      rep.influence = std::move(infl.values);
    } catch (const Error& e) {
      rep.message = std::string("variance unavailable: ") + e.what();
    }
  }
  return rep;
}

EstimateReport estimate_aps_gamma(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  std::optional<double> gamma, const EstimationOptions& options) {
  validate(dataset);
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd y = dataset.outcome_filled();
  std::optional<CvResult> cv;
  if (!gamma) {
    cv = select_gamma_cv(basis, y, dataset.delta, d, options.cv_grid, options.cv);
    gamma = cv->selected;
  }
  const std::string tag = EstimatorId{EstimatorKind::APSGamma, cv ? std::nullopt : gamma}.tag();

  if (dataset.full_response()) {
    EstimateReport rep = full_response_report(dataset, &basis, tag, options.with_variance);
    rep.gamma_used = *gamma;
    rep.state.gamma = *gamma;
    rep.cv = std::move(cv);
    return rep;
  }

  EstimateReport rep;
  rep.tag = tag;
  rep.gamma_used = *gamma;
  rep.cv = std::move(cv);
  const GammaFit gf = solve_gamma_system(basis, y, dataset.delta, d, *gamma, options.gamma);
  rep.weights = gamma_weights(gf, d, basis, dataset.delta);
  rep.calibration_residual = rep.weights.calibration_residual;
  rep.theta = weighted_mean(dataset, rep.weights);
  rep.state.phi = fit.phi;
  rep.state.lambda = gf.lambda;
  rep.state.beta = gf.beta;
  rep.state.sigma2 = gf.sigma2;
  rep.state.gamma = gf.gamma;
  rep.state.iterations = gf.outer_iterations;
  rep.state.converged = rep.converged = gf.converged;
  rep.state.gradient_norm = gf.beta_residual;
  if (gf.degenerate_sigma) rep.message = "all residuals zero; sigma2 pinned";
  attach_imputation(rep, dataset, basis, gf.beta);

  if (options.with_variance) {
    try {
      const NuisanceT2 nu = solve_nuisance_t2(dataset, basis, gf, d);
      const Eigen::VectorXd kappa = solve_kappa_t2(dataset, basis, fit, gf, nu);
      InfluenceVector infl = influence_t2(dataset, basis, fit, gf, nu, kappa, rep.theta);
      rep.set_variance(variance_from_influence(infl));
      rep.influence = std::move(infl.values);
    } catch (const Error& e) {
      rep.message = std::string("variance unavailable: ") + e.what();
    }
  }
  return rep;
}

EstimateReport estimate_hm(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                           const EstimationOptions& options) {
  validate(dataset);
  if (dataset.full_response()) return full_response_report(dataset, &basis, "HM", false);
  EstimateReport rep;
  rep.tag = "HM";
  const EntropyBalancing eb = solve_entropy_balancing(basis, fit.dhat(), dataset.delta, options.entropy);
  rep.weights = eb.weights;
  rep.calibration_residual = eb.weights.calibration_residual;
  rep.theta = weighted_mean(dataset, rep.weights);
  rep.state.phi = fit.phi;
  rep.state.lambda = eb.lambda;
  rep.state.iterations = eb.iterations;
  rep.state.converged = rep.converged = true;
  return rep;
}

EstimateReport estimate_tan(const Dataset& dataset, const Eigen::MatrixXd& design, const EstimationOptions& options) {
  validate(dataset);
  if (dataset.full_response()) return full_response_report(dataset, nullptr, "Tan", false);
  EstimateReport rep;
  rep.tag = "Tan";
  const PropensityFit fit = fit_tan_calibrated(dataset, design, options.newton);
  rep.theta = estimate_ipw(dataset, fit).theta;
  rep.calibration_residual = fit.score_residual;
  rep.state.phi = fit.phi;
  rep.state.iterations = fit.iterations;
  rep.state.converged = rep.converged = true;
  return rep;
}

std::vector<EstimateReport> estimate_all(const Dataset& dataset, const BasisMatrix& basis,
                                         const Eigen::MatrixXd& design, const std::vector<EstimatorId>& roster,
                                         const EstimationOptions& options) {
  validate(dataset);
  std::optional<PropensityFit> mle;
  std::optional<Error> mle_error;
  auto logistic = [&]() -> const PropensityFit& {
    if (!mle && !mle_error) {
      try {
        mle = dataset.full_response() ? full_response_fit(design) : fit_logistic_mle(dataset, design, options.newton);
      } catch (const Error& e) {
        mle_error = e;
      }
    }
    if (mle_error) throw *mle_error;
    return *mle;
  };

  std::vector<EstimateReport> out;
  out.reserve(roster.size());
  for (const EstimatorId& id : roster) {
    try {
      switch (id.kind) {
        case EstimatorKind::CC: out.push_back(estimate_cc(dataset)); break;
        case EstimatorKind::GLM: out.push_back(estimate_ipw(dataset, logistic())); break;
        case EstimatorKind::HM: out.push_back(estimate_hm(dataset, basis, logistic(), options)); break;
        case EstimatorKind::Tan: out.push_back(estimate_tan(dataset, design, options)); break;
        case EstimatorKind::APS: out.push_back(estimate_aps(dataset, basis, logistic(), options)); break;
        case EstimatorKind::APSGamma:
          out.push_back(estimate_aps_gamma(dataset, basis, logistic(), id.gamma, options));
          break;
      }
      out.back().tag = id.tag();
    } catch (const Error& e) {
      EstimateReport rep;
      rep.tag = id.tag();
      rep.theta = std::nan("");
      rep.error = e.code();
      rep.message = e.what();
      out.push_back(std::move(rep));
    }
  }
  return out;
}

}  // namespace trirobust
