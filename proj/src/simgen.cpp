#include "trirobust/simgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "trirobust/basis.hpp"
#include "trirobust/error.hpp"
#include "trirobust/propensity.hpp"

namespace trirobust {

std::string to_string(OutcomeModel m) {
  switch (m) {
    case OutcomeModel::OM1: return "OM1";
    case OutcomeModel::OM2: return "OM2";
    case OutcomeModel::External: return "EXT";
  }
  return "?";
}

std::string to_string(ResponseModel m) {
  switch (m) {
    case ResponseModel::PM1: return "PM1";
    case ResponseModel::PM2: return "PM2";
    case ResponseModel::PM3: return "PM3";
    case ResponseModel::PM4: return "PM4";
  }
  return "?";
}

std::pair<OutcomeModel, ResponseModel> parse_scenario_name(const std::string& name) {
  if (name.size() == 6) {
    const std::string om = name.substr(0, 3), pm = name.substr(3);
    std::optional<OutcomeModel> o;
    std::optional<ResponseModel> p;
    if (om == "OM1") o = OutcomeModel::OM1;
    if (om == "OM2") o = OutcomeModel::OM2;
    if (om == "EXT") o = OutcomeModel::External;
    if (pm == "PM1") p = ResponseModel::PM1;
    if (pm == "PM2") p = ResponseModel::PM2;
    if (pm == "PM3") p = ResponseModel::PM3;
    if (pm == "PM4") p = ResponseModel::PM4;
    if (o && p) return {*o, *p};
  }
  throw Error(ErrorCode::ConfigError, "unknown scenario '" + name + "' (expected e.g. OM1PM1, OM2PM2, EXTPM3)");
}

namespace {

bool table_based(ResponseModel m) { return m == ResponseModel::PM3 || m == ResponseModel::PM4; }

std::size_t required_columns(ResponseModel m) {
  switch (m) {
    case ResponseModel::PM1:
    case ResponseModel::PM2: return 2;
    case ResponseModel::PM3: return 3;
    case ResponseModel::PM4: return 6;
  }
  return 0;
}

void draw_covariates(Rng& rng, double& x1, double& x2) {
  x1 = rng.uniform(0.0, 2.0);
  x2 = rng.normal();
}

double outcome_mean(OutcomeModel m, double x1, double x2) {
  const double base = 1.0 + x1 + x2;
  if (m == OutcomeModel::OM2) return base + (x1 - 0.5) * std::pow(x2, 4);
  return base;
}

template <class Rate>
double bisect_intercept(double target, Rate rate) {
  if (!(target > 0.0 && target < 1.0)) throw Error(ErrorCode::InvalidArgument, "target rate must lie in (0, 1)");
  double lo = -30.0, hi = 30.0;
  const double rlo = rate(lo), rhi = rate(hi);
  if (!(rlo <= target && target <= rhi)) {
    throw Error(ErrorCode::BracketFailure, "target response rate is not attainable by shifting the intercept");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate(mid);
    if (r == target) return mid;
    (r < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void validate(const ScenarioSpec& spec) {
  if (spec.n < 10) throw Error(ErrorCode::InvalidArgument, "scenario n must be at least 10");
  if (spec.contamination) {
    const Contamination& c = *spec.contamination;
    if (!(c.fraction >= 0.0 && c.fraction <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "contamination fraction must lie in [0, 1]");
    }
    if (!(c.lo <= c.hi) || !std::isfinite(c.lo) || !std::isfinite(c.hi)) {
      throw Error(ErrorCode::InvalidArgument, "contamination range must satisfy lo <= hi");
    }
  }
  if (!(spec.target_rate > 0.0 && spec.target_rate < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "target response rate must lie in (0, 1)");
  }
  if (table_based(spec.response)) {
    if (!spec.table) throw Error(ErrorCode::InvalidArgument, "PM3/PM4 scenarios need a covariate table");
    if (spec.outcome != OutcomeModel::External) {
      throw Error(ErrorCode::InvalidArgument, "PM3/PM4 scenarios use the table outcome (EXT)");
    }
    if (static_cast<std::size_t>(spec.table->covariates.cols()) < required_columns(spec.response)) {
      throw Error(ErrorCode::MissingColumn, "covariate table has too few columns for " + to_string(spec.response));
    }
    if (spec.table->outcome.size() != spec.table->covariates.rows() || spec.table->covariates.rows() < 10) {
      throw Error(ErrorCode::InvalidArgument, "covariate table needs >= 10 rows and one outcome per row");
    }
  } else if (spec.outcome == OutcomeModel::External) {
    throw Error(ErrorCode::InvalidArgument, "external outcomes are only available with PM3/PM4");
  }
}

double response_index(ResponseModel m, std::span<const double> x) {
  if (x.size() < required_columns(m)) {
    throw Error(ErrorCode::MissingColumn, to_string(m) + " needs more covariate columns");
  }
  switch (m) {
    case ResponseModel::PM1: return 0.5 * x[0] + 0.5 * x[1];
    case ResponseModel::PM2: return x[0] + x[1];
    case ResponseModel::PM3: return 2.0 * x[0] + x[1] + 0.5 * x[2];
    case ResponseModel::PM4: return 2.0 * x[0] + x[1] + x[2] + x[3] + x[4] + x[5];
  }
  return 0.0;
}

double response_probability(ResponseModel m, double intercept, double index) {
  if (m == ResponseModel::PM1 || m == ResponseModel::PM3) return logistic(intercept + index);
  return intercept + index > 0.0 ? 0.8 : 0.4;
}

double calibrate_intercept(ResponseModel m, double target, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw Error(ErrorCode::InvalidArgument, "calibration needs at least one draw");
  if (table_based(m)) {
    const ExternalTable t = api_like_table(draws, seed);
    return calibrate_intercept_table(m, target, standardize_columns(t.covariates));
  }
  Rng rng = Rng::stream(seed, 0xca11b);
  std::vector<double> index(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    double x[2];
    draw_covariates(rng, x[0], x[1]);
    index[i] = response_index(m, x);
  }
  return bisect_intercept(target, [&](double a) {
    double s = 0.0;
    for (double v : index) s += response_probability(m, a, v);
    return s / static_cast<double>(draws);
  });
}

double calibrate_intercept_table(ResponseModel m, double target, const Eigen::MatrixXd& standardized) {
  const Eigen::Index n = standardized.rows();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty covariate table");
  std::vector<double> index(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(standardized.cols()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < standardized.cols(); ++j) row[static_cast<std::size_t>(j)] = standardized(i, j);
    index[static_cast<std::size_t>(i)] = response_index(m, row);
  }
  return bisect_intercept(target, [&](double a) {
    double s = 0.0;
    for (double v : index) s += response_probability(m, a, v);
    return s / static_cast<double>(n);
  });
}

Eigen::MatrixXd standardize_columns(const Eigen::MatrixXd& table) {
  Eigen::MatrixXd z = table;
  const double n = static_cast<double>(table.rows());
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    const double mean = table.col(j).sum() / n;
    z.col(j).array() -= mean;
    const double sd = std::sqrt(z.col(j).squaredNorm() / n);
    if (sd > 0.0) z.col(j) /= sd;
  }
  return z;
}

namespace {

std::vector<std::uint8_t> draw_table_response(const Eigen::MatrixXd& standardized, ResponseModel m,
                                              double intercept, Rng& rng) {
  std::vector<std::uint8_t> delta(static_cast<std::size_t>(standardized.rows()));
  std::vector<double> row(static_cast<std::size_t>(standardized.cols()));
  for (Eigen::Index i = 0; i < standardized.rows(); ++i) {
    for (Eigen::Index j = 0; j < standardized.cols(); ++j) row[static_cast<std::size_t>(j)] = standardized(i, j);
    delta[static_cast<std::size_t>(i)] = rng.bernoulli(response_probability(m, intercept, response_index(m, row)));
  }
  return delta;
}

}  // namespace

std::vector<std::uint8_t> apply_pm34(const Eigen::MatrixXd& table, ResponseModel m, std::uint64_t seed, double target,
                                     std::optional<double> intercept) {
  if (!table_based(m)) throw Error(ErrorCode::InvalidArgument, "apply_pm34 takes PM3 or PM4");
  if (static_cast<std::size_t>(table.cols()) < required_columns(m)) {
    throw Error(ErrorCode::MissingColumn, to_string(m) + " needs " + std::to_string(required_columns(m)) +
                                              " covariate columns", std::nullopt, static_cast<std::size_t>(table.cols()));
  }
  const Eigen::MatrixXd z = standardize_columns(table);
  const double a = intercept ? *intercept : calibrate_intercept_table(m, target, z);
  Rng rng = Rng::stream(seed, 0xde17a);
  return draw_table_response(z, m, a, rng);
}

Dataset generate(const ScenarioSpec& spec, Rng& rng) {
  validate(spec);
  if (!spec.intercept) throw Error(ErrorCode::InvalidArgument, "scenario intercept is not resolved");
  const double a = *spec.intercept;
  Rng xs = rng.split(1), ds = rng.split(2), ys = rng.split(3), cs = rng.split(4);

  Dataset data;
  if (table_based(spec.response)) {
    const ExternalTable& t = *spec.table;
    data.covariates = t.covariates;
    data.covariate_names = t.names;
    data.delta = draw_table_response(standardize_columns(t.covariates), spec.response, a, ds);
    data.outcome.resize(data.delta.size());
    for (std::size_t i = 0; i < data.delta.size(); ++i) {
      if (data.delta[i]) data.outcome[i] = t.outcome(static_cast<Eigen::Index>(i));
    }
  } else {
    const std::size_t n = spec.n;
    data.covariates.resize(static_cast<Eigen::Index>(n), 2);
    data.covariate_names = {"x1", "x2"};
    for (std::size_t i = 0; i < n; ++i) {
      double x1, x2;
      draw_covariates(xs, x1, x2);
      data.covariates(static_cast<Eigen::Index>(i), 0) = x1;
      data.covariates(static_cast<Eigen::Index>(i), 1) = x2;
    }
    // delta from x only, before any outcome exists.
    data.delta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x[2] = {data.covariates(static_cast<Eigen::Index>(i), 0),
                           data.covariates(static_cast<Eigen::Index>(i), 1)};
      data.delta[i] = ds.bernoulli(response_probability(spec.response, a, response_index(spec.response, x)));
    }
    data.outcome.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = outcome_mean(spec.outcome, data.covariates(static_cast<Eigen::Index>(i), 0),
                                    data.covariates(static_cast<Eigen::Index>(i), 1)) +
                       ys.normal();
      if (data.delta[i]) data.outcome[i] = y;
    }
  }

  if (spec.contamination && spec.contamination->fraction > 0.0) {
    std::vector<std::size_t> resp = data.respondent_rows();
    const auto m = static_cast<std::size_t>(std::llround(spec.contamination->fraction * static_cast<double>(resp.size())));
    for (std::size_t k = 0; k < m && k < resp.size(); ++k) {
      std::swap(resp[k], resp[k + cs.index(resp.size() - k)]);
      *data.outcome[resp[k]] += cs.uniform(spec.contamination->lo, spec.contamination->hi);
    }
  }
  validate(data);
  return data;
}

Dataset generate(const ScenarioSpec& spec) {
  Rng rng = Rng::stream(spec.seed, 0);
  return generate(spec, rng);
}

ScenarioSpec resolve_intercept(ScenarioSpec spec, std::size_t draws) {
  validate(spec);
  if (spec.intercept) return spec;
  if (table_based(spec.response)) {
    spec.intercept = calibrate_intercept_table(spec.response, spec.target_rate,
                                               standardize_columns(spec.table->covariates));
  } else {
    spec.intercept = calibrate_intercept(spec.response, spec.target_rate, draws, 0x5eed0fca11b ^ spec.seed);
  }
  return spec;
}

TruthValue truth_theta(const ScenarioSpec& spec) {
  switch (spec.outcome) {
    case OutcomeModel::OM1: return {2.0, 0.0};
    case OutcomeModel::OM2: return {3.5, 0.0};
    case OutcomeModel::External: {
      if (!spec.table) throw Error(ErrorCode::InvalidArgument, "external outcome needs a table");
      const Eigen::VectorXd& y = spec.table->outcome;
      const double n = static_cast<double>(y.size());
      const double mean = y.mean();
      const double var = (y.array() - mean).square().sum() / (n - 1.0);
      return {mean, std::sqrt(var / n)};
    }
  }
  return {};
}

TruthValue truth_theta_mc(OutcomeModel m, std::size_t draws, std::uint64_t seed) {
  if (m == OutcomeModel::External) throw Error(ErrorCode::InvalidArgument, "external outcome has no generator");
  if (draws < 2) throw Error(ErrorCode::InvalidArgument, "need at least two draws");
  Rng rng = Rng::stream(seed, 0x7207);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    double x1, x2;
    draw_covariates(rng, x1, x2);
    const double y = outcome_mean(m, x1, x2) + rng.normal();
    const double delta = y - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (y - mean);
  }
  const double n = static_cast<double>(draws);
  return {mean, std::sqrt(m2 / (n - 1.0) / n)};
}

ExternalTable api_like_table(std::size_t n, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0xa91);
  ExternalTable t;
  t.names = {"api99", "meals", "ell", "avg_ed", "full", "enroll"};
  t.covariates.resize(static_cast<Eigen::Index>(n), 6);
  t.outcome.resize(static_cast<Eigen::Index>(n));
  auto clamp = [](double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); };
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    const double z = rng.normal();  // school socioeconomic level
    const double api99 = 650.0 + 95.0 * z + 25.0 * rng.normal();
    const double meals = clamp(50.0 - 25.0 * z + 10.0 * rng.normal(), 0.0, 100.0);
    const double ell = clamp(22.0 - 12.0 * z + 8.0 * rng.normal(), 0.0, 100.0);
    const double avg_ed = clamp(2.8 + 0.6 * z + 0.25 * rng.normal(), 1.0, 5.0);
    const double full = clamp(88.0 + 5.0 * z + 6.0 * rng.normal(), 30.0, 100.0);
    const double enroll = std::exp(6.1 + 0.5 * rng.normal());
    t.covariates.row(i) << api99, meals, ell, avg_ed, full, enroll;
    t.outcome(i) = 45.0 + 0.96 * api99 - 0.1 * meals + 4.0 * avg_ed + 0.15 * full + 18.0 * rng.normal();
  }
  return t;
}

const EstimatorSummary& MonteCarloSummary::at(const std::string& tag) const {
  for (const auto& e : estimators) {
    if (e.estimator == tag) return e;
  }
  throw Error(ErrorCode::InvalidArgument, "no estimator '" + tag + "' in summary");
}

std::vector<EstimatorSummary> summarize(const std::vector<ReplicationRecord>& records,
                                        const std::vector<std::string>& tags, double truth) {
  std::vector<EstimatorSummary> out;
  for (const std::string& tag : tags) {
    EstimatorSummary s;
    s.estimator = tag;
    double sum = 0.0;
    std::size_t with_ci = 0, covered = 0;
    for (const auto& r : records) {
      if (r.estimator != tag || !r.converged) continue;
      sum += r.estimate;
      ++s.n_converged;
      if (r.ci95) {
        ++with_ci;
        covered += (r.ci95->first <= truth && truth <= r.ci95->second) ? 1 : 0;
      }
    }
    if (s.n_converged > 0) {
      const double R = static_cast<double>(s.n_converged);
      s.mean = sum / R;
      double ss = 0.0;
      for (const auto& r : records) {
        if (r.estimator == tag && r.converged) ss += (r.estimate - s.mean) * (r.estimate - s.mean);
      }
      s.variance = ss / R;
      s.bias = s.mean - truth;
      s.rmse = std::sqrt(s.bias * s.bias + s.variance);
      s.mc_se = std::sqrt(s.variance / R);
    } else {
      s.mean = s.bias = s.variance = s.rmse = s.mc_se = std::nan("");
    }
    if (with_ci > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(with_ci);
    out.push_back(s);
  }
  return out;
}

MonteCarloSummary run_monte_carlo(const ScenarioSpec& scenario, const std::vector<EstimatorId>& roster,
                                  std::size_t reps, std::uint64_t seed, const MonteCarloOptions& options) {
  if (reps == 0) throw Error(ErrorCode::InvalidArgument, "reps must be >= 1");
  if (roster.empty()) throw Error(ErrorCode::InvalidArgument, "estimator roster is empty");
  const ScenarioSpec spec = resolve_intercept(scenario);

  std::vector<std::vector<ReplicationRecord>> per_rep(reps);
  auto run_one = [&](std::size_t r) {
    Rng rng = Rng::stream(seed, r);
    std::vector<ReplicationRecord> recs;
    std::vector<EstimateReport> reports;
    try {
      const Dataset data = generate(spec, rng);
      const BasisMatrix basis = build_basis(data, BasisSpec::linear(data));
      const Eigen::MatrixXd design = default_design(data);
      reports = estimate_all(data, basis, design, roster, options.estimation);
    } catch (const Error& e) {
      // A replication whose data cannot be built counts as failed for everyone.
      reports.clear();
      for (const auto& id : roster) {
        EstimateReport rep;
        rep.tag = id.tag();
        rep.theta = std::nan("");
        rep.error = e.code();
        reports.push_back(std::move(rep));
      }
    }
    for (const EstimateReport& rep : reports) {
      ReplicationRecord rec;
      rec.rep = r;
      rec.estimator = rep.tag;
      rec.estimate = rep.theta;
      rec.converged = rep.converged && !rep.error && std::isfinite(rep.theta);
      rec.variance = rep.variance;
      rec.ci95 = rep.ci95;
      rec.dual_form_gap = rep.dual_form_gap;
      rec.calibration_residual = rep.calibration_residual;
      if (rep.influence) rec.plugin_gap = std::fabs(rep.influence->mean());
      recs.push_back(std::move(rec));
    }
    per_rep[r] = std::move(recs);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(reps)));
  if (threads == 1) {
    for (std::size_t r = 0; r < reps; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&]() {
        for (std::size_t r = next++; r < reps; r = next++) run_one(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  MonteCarloSummary summary;
  summary.truth = truth_theta(spec).value;
  summary.scenario = spec.name();
  for (auto& recs : per_rep) {
    for (auto& rec : recs) summary.replications.push_back(std::move(rec));
  }
  std::vector<std::string> tags;
  for (const auto& id : roster) tags.push_back(id.tag());
  summary.estimators = summarize(summary.replications, tags, summary.truth);
  return summary;
}

}  // namespace trirobust
