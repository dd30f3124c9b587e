#include "trirobust/variance.hpp"

#include <cmath>
#include <sstream>

#include "trirobust/error.hpp"
#include "trirobust/linalg.hpp"

namespace trirobust {

double InfluenceVector::plugin_mean() const {
  return values.size() == 0 ? 0.0 : values.mean() + theta;
}

double variance_from_influence(const Eigen::VectorXd& values) {
  const double n = static_cast<double>(values.size());
  if (n == 0) return 0.0;
  const double mean = values.mean();
  return (values.array() - mean).square().sum() / (n * n);
}

double variance_from_influence(const InfluenceVector& influence) {
  return variance_from_influence(influence.values);
}

namespace {

void check_inputs(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit) {
  const auto n = static_cast<Eigen::Index>(dataset.n());
  if (basis.rows() != n || fit.fitted.size() != n || fit.design.rows() != n) {
    throw Error(ErrorCode::ShapeMismatch, "variance: dataset, basis and propensity fit disagree on n");
  }
}

Eigen::VectorXd exp_index(const BasisMatrix& basis, const Eigen::VectorXd& lambda) {
  return (basis.values * lambda).array().exp().matrix();
}

}  // namespace

Eigen::VectorXd kappa_t1_equation(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta,
                                  const Eigen::VectorXd& kappa) {
  check_inputs(dataset, basis, fit);
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, lambda);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(fit.design.cols());
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    if (!dataset.delta[i]) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = fit.design.row(ii).transpose();
    const double r = y(ii) - basis.values.row(ii).dot(beta);
    out += (d(ii) - 1.0) * (g(ii) * r - h_function(fit, i).dot(kappa)) * x;
  }
  return out;
}

Eigen::VectorXd solve_kappa_t1(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                               const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta) {
  check_inputs(dataset, basis, fit);
  const Eigen::Index p = fit.design.cols();
  if (fit.method == PropensityMethod::FullResponse || dataset.full_response()) return Eigen::VectorXd::Zero(p);
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, lambda);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    if (!dataset.delta[i]) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = fit.design.row(ii).transpose();
    const double a = d(ii) - 1.0;
    A.noalias() += a * x * h_function(fit, i).transpose();
    c.noalias() += a * g(ii) * (y(ii) - basis.values.row(ii).dot(beta)) * x;
  }
  return linalg::solve_checked(A, c, ErrorCode::SingularSystem);
}

InfluenceVector influence_t1(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                             const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double theta,
                             const Eigen::VectorXd& kappa) {
  check_inputs(dataset, basis, fit);
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, lambda);
  InfluenceVector out;
  out.kind = InfluenceKind::T1;
  out.theta = theta;
  out.kappa = kappa;
  out.values.resize(static_cast<Eigen::Index>(dataset.n()));
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double fitted = basis.values.row(ii).dot(beta);
    double eta = fitted - theta;
    const double di = dataset.delta[i] ? 1.0 : 0.0;
    if (dataset.delta[i]) {
      const double omega = 1.0 + (d(ii) - 1.0) * g(ii);
      eta += omega * (y(ii) - fitted);
    }
    eta += (1.0 - di * d(ii)) * h_function(fit, i).dot(kappa);
    out.values(ii) = eta;
  }
  return out;
}

Eigen::MatrixXd SMatrices::system() const {
  const Eigen::Index p = s10.size();
  Eigen::MatrixXd S(2 * p + 1, 2 * p + 1);
  S.block(0, 0, p, p) = s11;
  S.block(0, p, p, p) = s12;
  S.block(0, 2 * p, p, 1) = s13;
  S.block(p, 0, p, p) = s21;
  S.block(p, p, p, p) = s22;
  S.block(p, 2 * p, p, 1) = s23;
  S.block(2 * p, 0, 1, p) = s31;
  S.block(2 * p, p, 1, p) = s32;
  S(2 * p, 2 * p) = s33;
  return S;
}

Eigen::VectorXd SMatrices::rhs() const {
  const Eigen::Index p = s10.size();
  Eigen::VectorXd r(2 * p + 1);
  r.head(p) = -s10;
  r.segment(p, p) = -s20;
  r(2 * p) = -s30;
  return r;
}

SMatrices compute_s_matrices(const Dataset& dataset, const BasisMatrix& basis, const GammaFit& fit,
                             const Eigen::VectorXd& dhat) {
  const Eigen::Index n = basis.rows();
  const Eigen::Index p = basis.dim();
  if (static_cast<Eigen::Index>(dataset.n()) != n || dhat.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "compute_s_matrices: length mismatch");
  }
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, fit.lambda);
  const double gam = fit.gamma;
  const double s2 = fit.sigma2;
  const double c = s2 / (1.0 + gam);

  SMatrices s;
  s.s10 = s.s20 = s.s13 = s.s23 = Eigen::VectorXd::Zero(p);
  s.s11 = s.s12 = s.s21 = s.s22 = Eigen::MatrixXd::Zero(p, p);
  s.s31 = s.s32 = Eigen::RowVectorXd::Zero(p);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!dataset.delta[static_cast<std::size_t>(i)]) continue;
    const Eigen::VectorXd b = basis.values.row(i).transpose();
    const double r = y(i) - b.dot(fit.beta);
    const double w = (dhat(i) - 1.0) * g(i) * q_weight(r, s2, gam);
    if (w == 0.0) continue;
    const Eigen::MatrixXd bb = b * b.transpose();
    const double e2 = r * r - c;
    s.s10 += w * y(i) * b;
    s.s11 -= w * bb;
    s.s12 += w * r * bb;
    s.s13 += w * e2 * b;
    const double a = gam * r / s2;
    s.s20 += w * a * y(i) * b;
    s.s21 -= w * a * bb;
    s.s22 += w * (gam * r * r / s2 - 1.0) * bb;
    s.s23 += w * r * (gam * e2 / s2 - 2.0) * b;
    const double t = gam * r * r / (2.0 * s2 * s2);
    s.s30 += w * t * y(i);
    s.s31 -= w * t * b.transpose();
    s.s32 += w * t * r * b.transpose();
    s.s33 += w * (t * e2 - 1.0 / (1.0 + gam));
  }
  const double inv = 1.0 / static_cast<double>(n);
  s.s10 *= inv, s.s20 *= inv, s.s13 *= inv, s.s23 *= inv;
  s.s11 *= inv, s.s12 *= inv, s.s21 *= inv, s.s22 *= inv;
  s.s31 *= inv, s.s32 *= inv;
  s.s30 *= inv, s.s33 *= inv;
  return s;
}

double t2_functional(const Dataset& dataset, const BasisMatrix& basis, const Eigen::VectorXd& dhat, double gamma,
                     const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double sigma2,
                     const Eigen::VectorXd& mu, const Eigen::VectorXd& zeta, double nu) {
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, lambda);
  const double c = sigma2 / (1.0 + gamma);
  double total = 0.0;
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    const Eigen::VectorXd b = basis.values.row(i).transpose();
    const double fitted = b.dot(mu);
    total += fitted;
    if (!dataset.delta[static_cast<std::size_t>(i)]) continue;
    const double r = y(i) - b.dot(beta);
    const double w = (dhat(i) - 1.0) * g(i) * q_weight(r, sigma2, gamma);
    total += (1.0 + w) * (y(i) - fitted) + w * r * b.dot(zeta) + w * nu * (r * r - c);
  }
  return total / static_cast<double>(basis.rows());
}

NuisanceT2 solve_nuisance_t2(const Dataset& dataset, const BasisMatrix& basis, const GammaFit& fit,
                             const Eigen::VectorXd& dhat) {
  const SMatrices s = compute_s_matrices(dataset, basis, fit, dhat);
  const Eigen::Index p = basis.dim();
  NuisanceT2 out;
  double cond = 0.0;
  Eigen::VectorXd sol;
  try {
    sol = linalg::solve_checked(s.system(), s.rhs(), ErrorCode::SingularSystem, 1e10, &cond);
  } catch (const Error&) {
    std::ostringstream msg;
    msg << "nuisance system is singular (equilibrated condition number "
        << linalg::equilibrated_condition(s.system()) << ")";
    throw Error(ErrorCode::SingularSystem, msg.str());
  }
  out.mu = sol.head(p);
  out.zeta = sol.segment(p, p);
  out.nu = sol(2 * p);
  out.condition = cond;
  return out;
}

namespace {

// Per-row bracket [(y - b'mu) + r b'zeta + nu (r^2 - c)] times w = delta (d-1) g q.
Eigen::VectorXd weighted_bracket(const Dataset& dataset, const BasisMatrix& basis, const Eigen::VectorXd& d,
                                 const GammaFit& fit, const NuisanceT2& nu) {
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, fit.lambda);
  const double c = fit.sigma2 / (1.0 + fit.gamma);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.rows());
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    if (!dataset.delta[static_cast<std::size_t>(i)]) continue;
    const auto b = basis.values.row(i);
    const double r = y(i) - b.dot(fit.beta);
    const double w = (d(i) - 1.0) * g(i) * q_weight(r, fit.sigma2, fit.gamma);
    out(i) = w * ((y(i) - b.dot(nu.mu)) + r * b.dot(nu.zeta) + nu.nu * (r * r - c));
  }
  return out;
}

// v = n^{-1} sum w [..] x~ and M of the kappa equation (unnormalized sums).
struct KappaT2Terms {
  Eigen::VectorXd v;
  Eigen::MatrixXd M;
};

KappaT2Terms kappa_t2_terms(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                            const GammaFit& gamma_fit, const NuisanceT2& nuisance) {
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd wb = weighted_bracket(dataset, basis, d, gamma_fit, nuisance);
  const Eigen::Index p = fit.design.cols();
  KappaT2Terms t{Eigen::VectorXd::Zero(p), Eigen::MatrixXd::Zero(p, p)};
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::VectorXd x = fit.design.row(ii).transpose();
    const double pi = fit.fitted(ii);
    const double di = dataset.delta[i] ? 1.0 : 0.0;
    t.v += wb(ii) * x;
    t.M.noalias() += ((di * d(ii) - 1.0) * pi * (1.0 - pi) - di * (d(ii) - 1.0) * pi) * x * x.transpose();
  }
  return t;
}

}  // namespace

Eigen::VectorXd kappa_t2_equation(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                                  const GammaFit& gamma_fit, const NuisanceT2& nuisance,
                                  const Eigen::VectorXd& kappa) {
  check_inputs(dataset, basis, fit);
  const KappaT2Terms t = kappa_t2_terms(dataset, basis, fit, gamma_fit, nuisance);
  return -(t.v + t.M * kappa) / static_cast<double>(dataset.n());
}

Eigen::VectorXd solve_kappa_t2(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                               const GammaFit& gamma_fit, const NuisanceT2& nuisance) {
  check_inputs(dataset, basis, fit);
  if (fit.method == PropensityMethod::FullResponse || dataset.full_response()) {
    return Eigen::VectorXd::Zero(fit.design.cols());
  }
  const KappaT2Terms t = kappa_t2_terms(dataset, basis, fit, gamma_fit, nuisance);
  return linalg::solve_checked(t.M, -t.v, ErrorCode::SingularSystem);
}

InfluenceVector influence_t2(const Dataset& dataset, const BasisMatrix& basis, const PropensityFit& fit,
                             const GammaFit& gamma_fit, const NuisanceT2& nuisance, const Eigen::VectorXd& kappa,
                             double theta) {
  check_inputs(dataset, basis, fit);
  const Eigen::VectorXd d = fit.dhat();
  const Eigen::VectorXd y = dataset.outcome_filled();
  const Eigen::VectorXd g = exp_index(basis, gamma_fit.lambda);
  const double c = gamma_fit.sigma2 / (1.0 + gamma_fit.gamma);
  InfluenceVector out;
  out.kind = InfluenceKind::T2;
  out.theta = theta;
  out.kappa = kappa;
  out.mu = nuisance.mu;
  out.zeta = nuisance.zeta;
  out.nu = nuisance.nu;
  out.values.resize(static_cast<Eigen::Index>(dataset.n()));
  for (std::size_t i = 0; i < dataset.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto b = basis.values.row(ii);
    const double fitted = b.dot(nuisance.mu);
    double eta = fitted - theta;
    const double di = dataset.delta[i] ? 1.0 : 0.0;
    if (dataset.delta[i]) {
      const double r = y(ii) - b.dot(gamma_fit.beta);
      const double w = (d(ii) - 1.0) * g(ii) * q_weight(r, gamma_fit.sigma2, gamma_fit.gamma);
      eta += (1.0 + w) * (y(ii) - fitted) + w * r * b.dot(nuisance.zeta) + w * nuisance.nu * (r * r - c);
    }
    eta += (1.0 - di * d(ii)) * h_function(fit, i).dot(kappa);
    out.values(ii) = eta;
  }
  return out;
}

}  // namespace trirobust
