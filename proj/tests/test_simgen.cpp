#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "trirobust/error.hpp"
#include "trirobust/simgen.hpp"

using namespace trirobust;

namespace {

ScenarioSpec scenario(OutcomeModel om, ResponseModel pm, std::size_t n = 1000) {
  ScenarioSpec s;
  s.outcome = om;
  s.response = pm;
  s.n = n;
  return resolve_intercept(s, 200000);
}

double response_rate(const Dataset& d) { return static_cast<double>(d.n_respondents()) / static_cast<double>(d.n()); }

}  // namespace

TEST_CASE("scenario names") {
  CHECK(parse_scenario_name("OM2PM1") == std::pair{OutcomeModel::OM2, ResponseModel::PM1});
  CHECK(parse_scenario_name("EXTPM4") == std::pair{OutcomeModel::External, ResponseModel::PM4});
  CHECK_THROWS_AS(parse_scenario_name("OM3PM1"), Error);
  CHECK(scenario(OutcomeModel::OM1, ResponseModel::PM2).name() == "OM1PM2");
}

TEST_CASE("scenario validation") {
  ScenarioSpec s;
  s.response = ResponseModel::PM3;
  CHECK_THROWS_AS(validate(s), Error);
  s.response = ResponseModel::PM1;
  s.outcome = OutcomeModel::External;
  CHECK_THROWS_AS(validate(s), Error);
  ScenarioSpec unresolved;
  CHECK_THROWS_AS(generate(unresolved), Error);
}

TEST_CASE("generation is deterministic per seed and stream") {
  const ScenarioSpec s = scenario(OutcomeModel::OM1, ResponseModel::PM1, 200);
  const Dataset a = generate(s), b = generate(s);
  CHECK(a.covariates == b.covariates);
  CHECK(a.delta == b.delta);
  CHECK(a.outcome == b.outcome);
  Rng r1 = Rng::stream(s.seed, 1);
  CHECK(generate(s, r1).covariates != a.covariates);
}

TEST_CASE("step response intercept is about -1") {
  const ScenarioSpec s = scenario(OutcomeModel::OM1, ResponseModel::PM2);
  CHECK(*s.intercept == doctest::Approx(-1.0).epsilon(0.02));
}

TEST_CASE("calibrated intercepts give the target response rate") {
  for (ResponseModel pm : {ResponseModel::PM1, ResponseModel::PM2}) {
    ScenarioSpec s = scenario(OutcomeModel::OM1, pm, 100000);
    CHECK(response_rate(generate(s)) == doctest::Approx(0.6).epsilon(0.01 / 0.6));
  }
  // Other targets are reachable too.
  ScenarioSpec s;
  s.target_rate = 0.75;
  s = resolve_intercept(s, 100000);
  s.n = 100000;
  CHECK(response_rate(generate(s)) == doctest::Approx(0.75).epsilon(0.01 / 0.75));
}

TEST_CASE("zero index gives the logistic intercept directly") {
  CHECK(response_probability(ResponseModel::PM1, std::log(1.5), 0.0) == doctest::Approx(0.6));
  CHECK(response_probability(ResponseModel::PM2, -1.0, 1.5) == 0.8);
  CHECK(response_probability(ResponseModel::PM2, -1.0, 0.5) == 0.4);
  const double x[2] = {1.0, 2.0};
  CHECK(response_index(ResponseModel::PM1, x) == doctest::Approx(1.5));
  CHECK(response_index(ResponseModel::PM2, x) == doctest::Approx(3.0));
}

TEST_CASE("unattainable target rates fail to bracket") {
  // The step model never exceeds 0.8.
  CHECK_THROWS_AS(calibrate_intercept(ResponseModel::PM2, 0.9, 1000, 1), Error);
  CHECK_THROWS_AS(calibrate_intercept(ResponseModel::PM1, 1.5, 1000, 1), Error);
}

TEST_CASE("true means") {
  CHECK(truth_theta(scenario(OutcomeModel::OM1, ResponseModel::PM1)).value == 2.0);
  CHECK(truth_theta(scenario(OutcomeModel::OM2, ResponseModel::PM1)).value == 3.5);
  const TruthValue m1 = truth_theta_mc(OutcomeModel::OM1, 1000000, 3);
  const TruthValue m2 = truth_theta_mc(OutcomeModel::OM2, 1000000, 3);
  CHECK(std::abs(m1.value - 2.0) < 4.0 * m1.standard_error);
  CHECK(std::abs(m2.value - 3.5) < 4.0 * m2.standard_error);
}

TEST_CASE("contamination perturbs the requested share of respondents") {
  ScenarioSpec s = scenario(OutcomeModel::OM1, ResponseModel::PM1, 500);
  const Dataset clean = generate(s);
  s.contamination = Contamination{};
  const Dataset dirty = generate(s);
  CHECK(dirty.delta == clean.delta);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < 500; ++i) {
    if (clean.outcome[i] && *clean.outcome[i] != *dirty.outcome[i]) {
      ++changed;
      CHECK(std::abs(*dirty.outcome[i] - *clean.outcome[i]) <= 50.0);
    }
  }
  CHECK(changed == static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(clean.n_respondents()))));
}

TEST_CASE("response depends only on covariates") {
  const Dataset a = generate(scenario(OutcomeModel::OM1, ResponseModel::PM1, 400));
  const Dataset b = generate(scenario(OutcomeModel::OM2, ResponseModel::PM1, 400));
  CHECK(a.covariates == b.covariates);
  CHECK(a.delta == b.delta);
}

TEST_CASE("table-based response mechanisms") {
  const ExternalTable t = api_like_table(20000, 5);
  CHECK(t.names.size() == 6);
  for (ResponseModel pm : {ResponseModel::PM3, ResponseModel::PM4}) {
    const auto delta = apply_pm34(t.covariates, pm, 8);
    const double rate = static_cast<double>(std::count(delta.begin(), delta.end(), 1)) / 20000.0;
    CHECK(rate == doctest::Approx(0.6).epsilon(0.02 / 0.6));
    CHECK(apply_pm34(t.covariates, pm, 8) == delta);
  }
  try {
    apply_pm34(t.covariates.leftCols(2), ResponseModel::PM3, 1);
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
  }
  try {
    apply_pm34(t.covariates.leftCols(5), ResponseModel::PM4, 1);
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
  }
  const Eigen::MatrixXd z = standardize_columns(t.covariates);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    CHECK(std::abs(z.col(j).mean()) < 1e-10);
    CHECK(z.col(j).squaredNorm() / 20000.0 == doctest::Approx(1.0));
  }
}

TEST_CASE("external scenario generation keeps the table outcome") {
  ScenarioSpec s;
  s.outcome = OutcomeModel::External;
  s.response = ResponseModel::PM3;
  s.table = std::make_shared<ExternalTable>(api_like_table(300, 2));
  s = resolve_intercept(s);
  const Dataset d = generate(s);
  CHECK(d.n() == 300);
  for (std::size_t i : d.respondent_rows()) CHECK(*d.outcome[i] == s.table->outcome(static_cast<Eigen::Index>(i)));
  CHECK(truth_theta(s).value == doctest::Approx(s.table->outcome.mean()));
}

TEST_CASE("summary statistics") {
  std::vector<ReplicationRecord> recs;
  const double est[] = {1.0, 2.0, 4.0};
  for (std::size_t r = 0; r < 3; ++r) {
    ReplicationRecord rec;
    rec.rep = r;
    rec.estimator = "A";
    rec.estimate = est[r];
    rec.converged = true;
    rec.ci95 = std::pair{est[r] - 1.0, est[r] + 1.0};
    recs.push_back(rec);
  }
  ReplicationRecord failed;
  failed.estimator = "A";
  failed.estimate = 100.0;
  recs.push_back(failed);
  const auto s = summarize(recs, {"A"}, 2.0)[0];
  CHECK(s.n_converged == 3);
  CHECK(s.mean == doctest::Approx(7.0 / 3.0));
  CHECK(s.bias == doctest::Approx(1.0 / 3.0));
  CHECK(s.variance == doctest::Approx(14.0 / 9.0));
  CHECK(s.rmse * s.rmse == doctest::Approx(s.bias * s.bias + s.variance));
  CHECK(s.mc_se == doctest::Approx(std::sqrt(14.0 / 27.0)));
  REQUIRE(s.coverage);
  CHECK(*s.coverage == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("Monte Carlo: single replication, roster order and thread count do not matter") {
  const ScenarioSpec s = scenario(OutcomeModel::OM1, ResponseModel::PM1, 300);
  MonteCarloOptions opts;
  opts.estimation.with_variance = false;
  const auto one = run_monte_carlo(s, default_roster(), 1, 3, opts);
  CHECK(one.replications.size() == default_roster().size());
  CHECK(one.at("CC").n_converged == 1);

  const std::vector<EstimatorId> r1{EstimatorId::parse("APS"), EstimatorId::parse("GLM")};
  const std::vector<EstimatorId> r2{EstimatorId::parse("GLM"), EstimatorId::parse("APS")};
  const auto a = run_monte_carlo(s, r1, 8, 5, opts);
  const auto b = run_monte_carlo(s, r2, 8, 5, opts);
  CHECK(a.at("APS").mean == b.at("APS").mean);
  CHECK(a.at("GLM").mean == b.at("GLM").mean);

  opts.threads = 3;
  const auto c = run_monte_carlo(s, r1, 8, 5, opts);
  REQUIRE(c.replications.size() == a.replications.size());
  for (std::size_t k = 0; k < a.replications.size(); ++k) {
    CHECK(c.replications[k].rep == a.replications[k].rep);
    CHECK(c.replications[k].estimator == a.replications[k].estimator);
    CHECK(c.replications[k].estimate == a.replications[k].estimate);
  }
  CHECK_THROWS_AS(run_monte_carlo(s, r1, 0, 5, opts), Error);
}
