#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/dataset.hpp"
#include "trirobust/estimators.hpp"
#include "trirobust/rng.hpp"

namespace trirobust {

enum class OutcomeModel { OM1, OM2, External };
enum class ResponseModel { PM1, PM2, PM3, PM4 };

std::string to_string(OutcomeModel m);
std::string to_string(ResponseModel m);
// "OM1PM2" style names; throws ConfigError.
std::pair<OutcomeModel, ResponseModel> parse_scenario_name(const std::string& name);

struct Contamination {
  double fraction = 0.2;
  double lo = -50.0;
  double hi = 50.0;
};

// Fixed covariate table with a fully observed outcome, used by the PM3/PM4
// mechanisms (only the response indicators are redrawn per replication).
struct ExternalTable {
  Eigen::MatrixXd covariates;
  std::vector<std::string> names;
  Eigen::VectorXd outcome;
};

struct ScenarioSpec {
  OutcomeModel outcome = OutcomeModel::OM1;
  ResponseModel response = ResponseModel::PM1;
  std::size_t n = 1000;
  std::optional<Contamination> contamination;
  std::uint64_t seed = 1;
  double target_rate = 0.6;
  // Response-model intercept (phi_0 or a); calibrated when absent.
  std::optional<double> intercept;
  // Required for PM3/PM4 (with OutcomeModel::External).
  std::shared_ptr<const ExternalTable> table;

  std::string name() const { return to_string(outcome) + to_string(response); }
};

// Throws InvalidArgument for inconsistent specs.
void validate(const ScenarioSpec& spec);

// Linear index of the response model without its intercept.
// PM1: 0.5 x1 + 0.5 x2            (logit)
// PM2: x1 + x2                    (step: 0.8 above -a, 0.4 below)
// PM3: 2 z1 + z2 + 0.5 z3         (logit, standardized table)
// PM4: 2 z1 + z2 + z3 + z4 + z5 + z6 (step, standardized table)
double response_index(ResponseModel m, std::span<const double> x);
double response_probability(ResponseModel m, double intercept, double index);

// Bisection on the intercept so that the mean response probability over
// `draws` covariate draws (common to every bisection step) equals `target`.
// Throws BracketFailure.
double calibrate_intercept(ResponseModel m, double target, std::size_t draws, std::uint64_t seed);
// Same, averaging over the rows of a standardized covariate table.
double calibrate_intercept_table(ResponseModel m, double target, const Eigen::MatrixXd& standardized);

// Columns centered and scaled to unit (population) variance; constant columns
// are only centered.
Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& table);

// Response indicators for a covariate table under PM3/PM4. Standardizes the
// table, calibrates the intercept on it when none is given. Throws
// MissingColumn when the table lacks the referenced columns.
std::vector<std::uint8_t> apply_pm34(const Eigen::MatrixXd& table, ResponseModel m, std::uint64_t seed,
                                     double target = 0.6, std::optional<double> intercept = std::nullopt);

// Draws x, then delta | x, then y | x, then contamination of observed y.
// `rng` is the replication stream. The intercept must be resolved.
Dataset generate(const ScenarioSpec& spec, Rng& rng);
Dataset generate(const ScenarioSpec& spec);  // stream 0 of spec.seed

// Returns spec with the intercept filled in (10^6 draws for PM1/PM2, the
// table itself for PM3/PM4).
ScenarioSpec resolve_intercept(ScenarioSpec spec, std::size_t draws = 1000000);

struct TruthValue {
  double value = 0.0;
  double standard_error = 0.0;  // 0 when analytic
};

// OM1: 2, OM2: 3.5 (analytic). External: mean of the table outcome.
TruthValue truth_theta(const ScenarioSpec& spec);
// Monte Carlo estimate of E(Y) for OM1/OM2 with its standard error.
TruthValue truth_theta_mc(OutcomeModel m, std::size_t draws, std::uint64_t seed);

// Synthetic school-performance-like table: six covariates on their natural
// scales (api99, meals, ell, avg_ed, full, enroll) and outcome api00.
ExternalTable api_like_table(std::size_t n, std::uint64_t seed);

struct ReplicationRecord {
  std::size_t rep = 0;
  std::string estimator;
  double estimate = 0.0;
  bool converged = false;
  std::optional<double> variance;
  std::optional<std::pair<double, double>> ci95;
  double dual_form_gap = 0.0;
  double calibration_residual = 0.0;
  double plugin_gap = 0.0;  // |mean influence + theta - estimate|, when an influence vector exists
};

struct EstimatorSummary {
  std::string estimator;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;  // 1/R over converged replications
  double rmse = 0.0;
  double mc_se = 0.0;  // sqrt(variance / R)
  std::size_t n_converged = 0;
  std::optional<double> coverage;  // share of 95% intervals covering the truth
};

struct MonteCarloSummary {
  double truth = 0.0;
  std::string scenario;
  std::vector<EstimatorSummary> estimators;  // roster order
  std::vector<ReplicationRecord> replications;  // by rep, then roster order

  const EstimatorSummary& at(const std::string& tag) const;
};

struct MonteCarloOptions {
  unsigned threads = 1;
  EstimationOptions estimation{};
};

// Replication r uses Rng::stream(seed, r); results do not depend on the
// thread count. Failed estimators are recorded as not converged.
MonteCarloSummary run_monte_carlo(const ScenarioSpec& scenario, const std::vector<EstimatorId>& roster,
                                  std::size_t reps, std::uint64_t seed, const MonteCarloOptions& options = {});

// Aggregation only (exposed for tests).
std::vector<EstimatorSummary> summarize(const std::vector<ReplicationRecord>& records,
                                        const std::vector<std::string>& tags, double truth);

}  // namespace trirobust
