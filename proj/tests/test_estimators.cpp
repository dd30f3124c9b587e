#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "trirobust/error.hpp"
#include "trirobust/estimators.hpp"

using namespace trirobust;

namespace {

Dataset four_units() {
  // Respondents y = 1, 5, 3; one nonrespondent.
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 3.0;
  return make_dataset(x, {1, 1, 0, 1}, {1.0, 5.0, std::nullopt, 3.0}, {"x1"});
}

Dataset transform_outcome(const Dataset& d, double a, double b) {
  std::vector<std::optional<double>> y = d.outcome;
  for (auto& v : y) {
    if (v) *v = a + b * *v;
  }
  return make_dataset(d.covariates, d.delta, y, d.covariate_names);
}

}  // namespace

TEST_CASE("complete case mean") {
  const EstimateReport r = estimate_cc(four_units());
  CHECK(r.theta == doctest::Approx(3.0));
  CHECK(r.converged);
}

TEST_CASE("IPW with intercept-only propensity equals the complete-case mean") {
  const Dataset d = four_units();
  const PropensityFit fit = fit_logistic_mle(d, Eigen::MatrixXd::Ones(4, 1));
  CHECK(estimate_ipw(d, fit).theta == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("APS closed form: intercept only, d = 3") {
  // n = 4, two respondents y = (1, 3) with d = 3: omega = 2 each, theta = 2.
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 0);
  const Dataset d = make_dataset(x, {1, 0, 1, 0}, {1.0, std::nullopt, 3.0, std::nullopt});
  const BasisMatrix b = basis_from_values(Eigen::MatrixXd::Ones(4, 1));
  const PropensityFit fit = fixture::fixed_fit(Eigen::VectorXd::Constant(4, 1.0 / 3.0));
  EstimationOptions opts;
  opts.with_variance = false;
  const EstimateReport r = estimate_aps(d, b, fit, opts);
  CHECK(r.theta == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.weights.weights(0) == doctest::Approx(2.0));
  CHECK(r.state.lambda(0) == doctest::Approx(std::log(0.5)));
  REQUIRE(r.imputation_theta);
  CHECK(*r.imputation_theta == doctest::Approx(2.0));
}

TEST_CASE("full response: every estimator returns the sample mean") {
  Eigen::MatrixXd x(5, 1);
  x << 0.1, -0.4, 1.2, 0.7, -1.1;
  const Dataset d = make_dataset(x, {1, 1, 1, 1, 1}, {2.0, 4.0, 6.0, 3.0, 5.0}, {"x1"});
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  std::vector<EstimatorId> roster = default_roster();
  roster.push_back(EstimatorId::parse("APSgamma:cv"));
  const auto reports = estimate_all(d, b, default_design(d), roster);
  for (const auto& r : reports) {
    CAPTURE(r.tag);
    CHECK_FALSE(r.error);
    CHECK(r.theta == doctest::Approx(4.0).epsilon(1e-12));
  }
  // eta = y - theta gives the textbook variance of the mean (1/n^2 sum).
  const auto& aps = reports[4];
  REQUIRE(aps.variance);
  CHECK(*aps.variance == doctest::Approx(10.0 / 25.0));
}

TEST_CASE("gamma = 0 equals APS") {
  const auto inst = fixture::random_instance(23, 700, 3);
  const EstimateReport a = estimate_aps(inst.data, inst.basis, inst.fit);
  const EstimateReport g = estimate_aps_gamma(inst.data, inst.basis, inst.fit, 0.0);
  CHECK(std::abs(a.theta - g.theta) < 1e-8);
  CHECK((a.state.beta - g.state.beta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a.state.lambda - g.state.lambda).cwiseAbs().maxCoeff() < 1e-8);
  REQUIRE(a.variance);
  REQUIRE(g.variance);
  CHECK(*a.variance == doctest::Approx(*g.variance).epsilon(1e-6));
}

TEST_CASE("HM with an intercept-only basis is the self-normalized IPW estimator") {
  const auto inst = fixture::random_instance(31, 300, 2);
  const BasisMatrix b = basis_from_values(Eigen::MatrixXd::Ones(300, 1));
  const EstimateReport r = estimate_hm(inst.data, b, inst.fit);
  double num = 0.0, den = 0.0;
  for (std::size_t i : inst.data.respondent_rows()) {
    num += inst.dhat(static_cast<Eigen::Index>(i)) * inst.data.observed_outcome(i);
    den += inst.dhat(static_cast<Eigen::Index>(i));
  }
  CHECK(r.theta == doctest::Approx(num / den).epsilon(1e-12));
}

TEST_CASE("location and scale equivariance") {
  const auto inst = fixture::random_instance(37, 500, 2, 0.1);
  const Dataset t = transform_outcome(inst.data, -4.0, 2.5);
  const auto r0 = estimate_all(inst.data, inst.basis, inst.design, default_roster());
  const auto r1 = estimate_all(t, inst.basis, inst.design, default_roster());
  for (std::size_t k = 0; k < r0.size(); ++k) {
    CAPTURE(r0[k].tag);
    if (r0[k].tag == "GLM") {
      // The unnormalized IPW mean is scale- but not location-equivariant.
      const Dataset scaled = transform_outcome(inst.data, 0.0, 2.5);
      CHECK(estimate_ipw(scaled, inst.fit).theta == doctest::Approx(2.5 * r0[k].theta).epsilon(1e-12));
      continue;
    }
    CHECK(r1[k].theta == doctest::Approx(-4.0 + 2.5 * r0[k].theta).epsilon(1e-8));
    if (r0[k].variance) CHECK(*r1[k].variance == doctest::Approx(6.25 * *r0[k].variance).epsilon(1e-6));
  }
}

TEST_CASE("weighting estimators calibrate and report dual forms") {
  const auto inst = fixture::random_instance(41, 900, 4);
  const auto reports = estimate_all(inst.data, inst.basis, inst.design, default_roster());
  for (const auto& r : reports) {
    CAPTURE(r.tag);
    CHECK(r.converged);
    CHECK_FALSE(r.error);
    if (r.tag == "HM" || r.tag == "APS" || r.tag == "APSgamma:0.5") CHECK(r.calibration_residual <= 1e-8);
    if (r.imputation_theta) CHECK(r.dual_form_gap <= 1e-6 * 900);
  }
  // Basis equal to the propensity design: APS and the calibrated fit coincide.
  CHECK(reports[4].theta == doctest::Approx(reports[3].theta).epsilon(1e-8));
}

TEST_CASE("estimator tags") {
  CHECK(EstimatorId::parse("APSgamma:0.5").gamma == 0.5);
  CHECK_FALSE(EstimatorId::parse("APSgamma:cv").gamma);
  CHECK(EstimatorId::parse("APSgamma:0.25").tag() == "APSgamma:0.25");
  for (const auto& id : default_roster()) CHECK(EstimatorId::parse(id.tag()) == id);
  for (const char* bad : {"aps", "APSgamma:", "APSgamma:-1", "APSgamma:x", "IPW"}) {
    CAPTURE(bad);
    try {
      EstimatorId::parse(bad);
      FAIL("expected ConfigError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}

TEST_CASE("confidence interval uses the normal quantile") {
  EstimateReport r;
  r.theta = 1.0;
  r.set_variance(0.04);
  REQUIRE(r.ci95);
  CHECK(r.ci95->first == doctest::Approx(1.0 - 1.959964 * 0.2));
  CHECK(r.ci95->second == doctest::Approx(1.0 + 1.959964 * 0.2));
}

TEST_CASE("a failing solver marks only its estimator") {
  // Respondents all have x > 0 while the population mean of x is negative:
  // entropy balancing is infeasible, the rest still run.
  Eigen::MatrixXd x(10, 1);
  x << 1, 2, 3, 1.5, 2.5, -20, -20, -20, 0.5, -20;
  const Dataset d = make_dataset(x, {1, 1, 1, 1, 1, 0, 0, 0, 1, 0},
                                 {1.0, 2.0, 3.0, 1.0, 2.0, std::nullopt, std::nullopt, std::nullopt, 1.0, std::nullopt},
                                 {"x1"});
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  const Eigen::MatrixXd design = Eigen::MatrixXd::Ones(10, 1);
  const auto reports = estimate_all(d, b, design, {EstimatorId::parse("CC"), EstimatorId::parse("HM")});
  CHECK(reports[0].theta == doctest::Approx(10.0 / 6.0));
  REQUIRE(reports[1].error);
  CHECK(*reports[1].error == ErrorCode::Infeasible);
  CHECK(std::isnan(reports[1].theta));
  CHECK(reports[1].diagnostics().find("error=") != std::string::npos);
}
