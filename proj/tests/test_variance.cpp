#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "trirobust/balancing.hpp"
#include "trirobust/estimators.hpp"
#include "trirobust/simgen.hpp"
#include "trirobust/variance.hpp"

using namespace trirobust;

namespace {

struct ApsParts {
  Eigen::VectorXd lambda, beta;
  double theta = 0.0;
};

ApsParts aps_parts(const fixture::Instance& inst) {
  ApsParts p;
  p.lambda = solve_aps_lambda(inst.basis, inst.dhat, inst.data.delta).lambda;
  const WeightSet w = aps_weights(inst.basis, inst.dhat, p.lambda, inst.data.delta);
  p.beta = ibc_beta(inst.basis, inst.y, w, inst.data.delta);
  p.theta = w.full_length(inst.data.n()).dot(inst.y) / static_cast<double>(inst.data.n());
  return p;
}

// Stacked gradient s_k0 + s_k1 mu + s_k2 zeta + s_k3 nu, k = 1, 2, 3.
Eigen::VectorXd s_gradient(const SMatrices& s, const Eigen::VectorXd& mu, const Eigen::VectorXd& zeta, double nu) {
  const Eigen::Index p = mu.size();
  Eigen::VectorXd g(2 * p + 1);
  g.head(p) = s.s10 + s.s11 * mu + s.s12 * zeta + s.s13 * nu;
  g.segment(p, p) = s.s20 + s.s21 * mu + s.s22 * zeta + s.s23 * nu;
  g(2 * p) = s.s30 + s.s31.dot(mu) + s.s32.dot(zeta) + s.s33 * nu;
  return g;
}

}  // namespace

TEST_CASE("influence variance: two points") {
  Eigen::VectorXd v(2);
  v << 3.0, -1.0;
  CHECK(variance_from_influence(v) == doctest::Approx(16.0 / 8.0));
  CHECK(variance_from_influence(Eigen::VectorXd()) == 0.0);
}

TEST_CASE("kappa vanishes when the outcome is exactly linear in the basis") {
  auto inst = fixture::random_instance(3, 300, 2);
  for (Eigen::Index i = 0; i < 300; ++i) {
    if (inst.data.delta[static_cast<std::size_t>(i)]) inst.y(i) = inst.basis.values.row(i).dot(Eigen::Vector3d(1, -2, 0.5));
  }
  std::vector<std::optional<double>> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    if (inst.data.delta[i]) y[i] = inst.y(static_cast<Eigen::Index>(i));
  }
  inst.data = make_dataset(inst.data.covariates, inst.data.delta, y, inst.data.covariate_names);
  const ApsParts p = aps_parts(inst);
  const Eigen::VectorXd kappa = solve_kappa_t1(inst.data, inst.basis, inst.fit, p.lambda, p.beta);
  CHECK(kappa.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("kappa with an intercept-only design is c / A") {
  const auto inst = fixture::random_instance(5, 200, 1, 0.0, std::vector<std::size_t>{});
  REQUIRE(inst.design.cols() == 1);
  const ApsParts p = aps_parts(inst);
  double A = 0.0, c = 0.0;
  for (Eigen::Index i = 0; i < 200; ++i) {
    if (!inst.data.delta[static_cast<std::size_t>(i)]) continue;
    const double a = inst.dhat(i) - 1.0;
    A += a * inst.fit.fitted(i);
    c += a * std::exp(inst.basis.values.row(i).dot(p.lambda)) * (inst.y(i) - inst.basis.values.row(i).dot(p.beta));
  }
  const Eigen::VectorXd kappa = solve_kappa_t1(inst.data, inst.basis, inst.fit, p.lambda, p.beta);
  CHECK(kappa(0) == doctest::Approx(c / A).epsilon(1e-10));
}

TEST_CASE("kappa agrees with a derivative-free root finder") {
  // Basis (1, x1), propensity design (1, x1, x2).
  const auto inst = fixture::random_instance(9, 400, 2, 0.0, std::nullopt, std::vector<std::size_t>{0});
  const ApsParts p = aps_parts(inst);
  const Eigen::VectorXd kappa = solve_kappa_t1(inst.data, inst.basis, inst.fit, p.lambda, p.beta);
  auto F = [&](const Eigen::VectorXd& k) {
    return Eigen::VectorXd(kappa_t1_equation(inst.data, inst.basis, inst.fit, p.lambda, p.beta, k) / 400.0);
  };
  const Eigen::VectorXd ref = oracle::nelder_mead_root(F, Eigen::VectorXd::Zero(3), 1.0);
  CHECK((kappa - ref).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(F(kappa).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("influence function reproduces the estimate") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = fixture::random_instance(seed, 500, 3);
    const ApsParts p = aps_parts(inst);
    const Eigen::VectorXd kappa = solve_kappa_t1(inst.data, inst.basis, inst.fit, p.lambda, p.beta);
    const InfluenceVector eta = influence_t1(inst.data, inst.basis, inst.fit, p.lambda, p.beta, p.theta, kappa);
    CHECK(std::abs(eta.plugin_mean() - p.theta) < 1e-8);
  }
}

TEST_CASE("full response influence is y - theta") {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 3.0;
  const Dataset d = make_dataset(x, {1, 1, 1, 1}, {1.0, 2.0, 4.0, 5.0}, {"x1"});
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  const EstimateReport r = estimate_aps(d, b, full_response_fit(default_design(d)));
  REQUIRE(r.influence);
  CHECK(r.influence->isApprox(Eigen::Vector4d(-2, -1, 1, 2)));
  CHECK(*r.variance == doctest::Approx(10.0 / 16.0));
}

TEST_CASE("linearization variance agrees with the bootstrap") {
  const auto inst = fixture::random_instance(77, 600, 2);
  EstimationOptions opts;
  const EstimateReport full = estimate_aps(inst.data, inst.basis, inst.fit, opts);
  REQUIRE(full.variance);
  opts.with_variance = false;
  Rng rng(2024);
  const std::size_t B = 300;
  double s = 0.0, s2 = 0.0;
  std::vector<std::size_t> rows(600);
  for (std::size_t b = 0; b < B; ++b) {
    for (auto& r : rows) r = rng.index(600);
    const Dataset d = subset_rows(inst.data, rows);
    const BasisMatrix bm = build_basis(d, BasisSpec::linear(d));
    const PropensityFit fit = fit_logistic_mle(d, default_design(d));
    const double t = estimate_aps(d, bm, fit, opts).theta;
    s += t, s2 += t * t;
  }
  const double var = s2 / B - (s / B) * (s / B);
  CHECK(std::abs(var / *full.variance - 1.0) < 0.25);
}

TEST_CASE("s-matrices are the gradients of the linearized functional") {
  const auto inst = fixture::random_instance(15, 400, 2, 0.1);
  const double gamma = 0.5;
  const GammaFit fit = solve_gamma_system(inst.basis, inst.y, inst.data.delta, inst.dhat, gamma);
  const SMatrices s = compute_s_matrices(inst.data, inst.basis, fit, inst.dhat);

  const Eigen::Index p = inst.basis.dim();
  Eigen::VectorXd tilt = Eigen::VectorXd::Zero(inst.basis.rows());
  for (Eigen::Index i = 0; i < tilt.size(); ++i) {
    if (inst.data.delta[static_cast<std::size_t>(i)]) tilt(i) = (inst.dhat(i) - 1.0) * fit.q(i);
  }
  CHECK((s.s11 + tilted_calibration_jacobian(inst.basis, tilt, fit.lambda)).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::VectorXd mu(p), zeta(p);
  mu << 1.0, -0.5, 0.3;
  zeta << 0.2, 0.1, -0.4;
  const double nu = 0.7;
  Eigen::VectorXd point(2 * p + 1);
  point << fit.lambda, fit.beta, fit.sigma2;
  auto phi = [&](const Eigen::VectorXd& t) {
    return t2_functional(inst.data, inst.basis, inst.dhat, gamma, t.head(p), t.segment(p, p), t(2 * p), mu, zeta, nu);
  };
  const Eigen::VectorXd fd = oracle::central_gradient(phi, point, 1e-5);
  CHECK((fd - s_gradient(s, mu, zeta, nu)).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("nuisance and kappa equations hold for the robust estimator") {
  const auto inst = fixture::random_instance(19, 500, 2, 0.1);
  const GammaFit fit = solve_gamma_system(inst.basis, inst.y, inst.data.delta, inst.dhat, 0.5);
  const NuisanceT2 nu = solve_nuisance_t2(inst.data, inst.basis, fit, inst.dhat);
  const SMatrices s = compute_s_matrices(inst.data, inst.basis, fit, inst.dhat);
  CHECK(s_gradient(s, nu.mu, nu.zeta, nu.nu).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::VectorXd kappa = solve_kappa_t2(inst.data, inst.basis, inst.fit, fit, nu);
  CHECK(kappa_t2_equation(inst.data, inst.basis, inst.fit, fit, nu, kappa).cwiseAbs().maxCoeff() < 1e-8);

  // The phi-derivative of the influence mean vanishes at kappa: check by
  // perturbing phi through the propensity fit.
  const Eigen::VectorXd y = inst.y;
  auto mean_eta = [&](const Eigen::VectorXd& phi) {
    PropensityFit f = inst.fit;
    f.phi = phi;
    for (Eigen::Index i = 0; i < f.fitted.size(); ++i) f.fitted(i) = logistic(f.design.row(i).dot(phi));
    return influence_t2(inst.data, inst.basis, f, fit, nu, kappa, 0.0).values.mean();
  };
  const Eigen::VectorXd g = oracle::central_gradient(mean_eta, inst.fit.phi, 1e-6);
  CHECK(g.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("robust variance tends to the augmented propensity variance as gamma -> 0") {
  const auto inst = fixture::random_instance(29, 600, 2);
  const EstimateReport a = estimate_aps(inst.data, inst.basis, inst.fit);
  const EstimateReport g = estimate_aps_gamma(inst.data, inst.basis, inst.fit, 1e-7);
  REQUIRE(a.variance);
  REQUIRE(g.variance);
  CHECK(*g.variance == doctest::Approx(*a.variance).epsilon(1e-4));
  CHECK(g.theta == doctest::Approx(a.theta).epsilon(1e-5));
}

TEST_CASE("robust influence reproduces the estimate") {
  const auto inst = fixture::random_instance(31, 600, 3, 0.2);
  const EstimateReport r = estimate_aps_gamma(inst.data, inst.basis, inst.fit, 0.5);
  REQUIRE(r.influence);
  CHECK(std::abs(r.influence->mean()) < 1e-8);
}

TEST_CASE("robust interval coverage") {
  ScenarioSpec spec;
  spec.outcome = OutcomeModel::OM1;
  spec.response = ResponseModel::PM1;
  spec.n = 1000;
  spec = resolve_intercept(spec, 200000);
  const auto mc = run_monte_carlo(spec, {EstimatorId::parse("APSgamma:0.5")}, 200, 11);
  const auto& s = mc.at("APSgamma:0.5");
  REQUIRE(s.coverage);
  CHECK(*s.coverage >= 0.91);
  CHECK(*s.coverage <= 0.98);
}
