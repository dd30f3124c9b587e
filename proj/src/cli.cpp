#include "trirobust/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "trirobust/basis.hpp"
#include "trirobust/csv.hpp"
#include "trirobust/estimators.hpp"
#include "trirobust/format.hpp"
#include "trirobust/gamma_robust.hpp"
#include "trirobust/propensity.hpp"
#include "trirobust/simgen.hpp"

namespace trirobust::cli {

namespace {

// Writes to <path>.partial and renames on commit; an uncommitted file is
// removed, so failed runs leave nothing behind.
class StagedFile {
 public:
  explicit StagedFile(std::string path) : path_(std::move(path)), staging_(path_ + ".partial") {
    out_.open(staging_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::IoError, "cannot open '" + path_ + "' for writing");
  }
  StagedFile(const StagedFile&) = delete;
  StagedFile& operator=(const StagedFile&) = delete;
  ~StagedFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(staging_, ec);
    }
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw Error(ErrorCode::IoError, "write to '" + path_ + "' failed");
    out_.close();
    std::error_code ec;
    std::filesystem::rename(staging_, path_, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot move output into place at '" + path_ + "': " + ec.message());
    committed_ = true;
  }

 private:
  std::string path_, staging_;
  std::ofstream out_;
  bool committed_ = false;
};

std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + v[i];
  return out;
}

std::vector<EstimatorId> roster_from(const RunConfig& config) {
  if (config.estimators.empty()) return default_roster();
  std::vector<EstimatorId> roster;
  for (const std::string& tag : config.estimators) roster.push_back(EstimatorId::parse(tag));
  return roster;
}

EstimationOptions estimation_options(const RunConfig& config) {
  EstimationOptions opt;
  opt.with_variance = config.variance;
  opt.cv_grid = config.gamma_grid;
  opt.cv.folds = config.folds;
  opt.cv.seed = config.seed;
  return opt;
}

struct LoadedInput {
  Dataset dataset;
  BasisMatrix basis;
  Eigen::MatrixXd design;
};

LoadedInput load_input(const RunConfig& config) {
  if (config.input.empty()) throw Error(ErrorCode::ConfigError, "--input is required for " + config.command);
  const csv::Table table = csv::read_file(config.input);
  LoadedInput in;
  in.dataset = csv::to_dataset(table, config.outcome, config.covariates);
  const TransformRegistry registry;
  const BasisSpec spec = config.basis.empty() ? BasisSpec::linear(in.dataset)
                                              : registry.parse(config.basis, in.dataset.covariate_names);
  in.basis = build_basis(in.dataset, spec);
  if (config.propensity.empty()) {
    in.design = default_design(in.dataset);
  } else {
    std::vector<std::size_t> cols;
    for (const std::string& name : config.propensity) {
      if (name == "1" || name == "intercept" || name == "(intercept)") continue;
      const auto& names = in.dataset.covariate_names;
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) {
        throw Error(ErrorCode::MissingColumn, "propensity column '" + name + "' is not a covariate");
      }
      cols.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    in.design = design_from_columns(in.dataset, cols);
  }
  return in;
}

void require_output(const RunConfig& config) {
  if (config.output.empty()) throw Error(ErrorCode::ConfigError, "--output is required");
}

std::string summary_path(const RunConfig& config) {
  if (!config.summary_output.empty()) return config.summary_output;
  const std::filesystem::path p(config.output);
  return (p.parent_path() / (p.stem().string() + "_summary.csv")).string();
}

}  // namespace

void validate(const RunConfig& config) {
  if (config.command != "simulate" && config.command != "estimate" && config.command != "cv-gamma") {
    throw Error(ErrorCode::ConfigError, "unknown command '" + config.command + "'");
  }
  if (config.gamma_grid.empty()) throw Error(ErrorCode::ConfigError, "gamma grid is empty");
  for (double g : config.gamma_grid) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorCode::ConfigError, "gamma grid values must be >= 0");
  }
  if (config.folds < 2) throw Error(ErrorCode::ConfigError, "folds must be >= 2");
  if (config.threads == 0) throw Error(ErrorCode::ConfigError, "threads must be >= 1");
  for (const std::string& tag : config.estimators) EstimatorId::parse(tag);
  if (config.command == "simulate") {
    parse_scenario_name(config.scenario);
    if (config.reps == 0) throw Error(ErrorCode::ConfigError, "reps must be >= 1");
    if (config.n < 10) throw Error(ErrorCode::ConfigError, "n must be >= 10");
    if (!(config.contamination >= 0.0 && config.contamination <= 1.0)) {
      throw Error(ErrorCode::ConfigError, "contamination must lie in [0, 1]");
    }
    if (!(config.contamination_lo <= config.contamination_hi)) {
      throw Error(ErrorCode::ConfigError, "contamination range needs lo <= hi");
    }
    if (!(config.target_rate > 0.0 && config.target_rate < 1.0)) {
      throw Error(ErrorCode::ConfigError, "target response rate must lie in (0, 1)");
    }
  }
}

std::string metadata(const RunConfig& config) {
  std::ostringstream out;
  auto kv = [&](const char* k, const std::string& v) { out << k << '=' << v << '\n'; };
  kv("command", config.command);
  kv("seed", std::to_string(config.seed));
  if (config.command == "simulate") {
    kv("scenario", config.scenario);
    kv("n", std::to_string(config.n));
    kv("reps", std::to_string(config.reps));
    kv("contamination", format_number(config.contamination));
    kv("contamination_lo", format_number(config.contamination_lo));
    kv("contamination_hi", format_number(config.contamination_hi));
    kv("target_rate", format_number(config.target_rate));
  }
  if (!config.input.empty()) kv("input", config.input);
  kv("outcome", config.outcome);
  kv("covariates", join(config.covariates));
  kv("basis", join(config.basis));
  kv("propensity", join(config.propensity));
  std::vector<std::string> tags;
  for (const auto& id : roster_from(config)) tags.push_back(id.tag());
  kv("estimators", join(tags));
  std::vector<std::string> grid;
  for (double g : config.gamma_grid) grid.push_back(format_number(g));
  kv("gamma_grid", join(grid));
  kv("folds", std::to_string(config.folds));
  kv("variance", config.variance ? "true" : "false");
  kv("output", config.output);
  return out.str();
}

int cmd_simulate(const RunConfig& config, std::ostream& log) {
  validate(config);
  require_output(config);
  const auto [om, pm] = parse_scenario_name(config.scenario);
  ScenarioSpec spec;
  spec.outcome = om;
  spec.response = pm;
  spec.n = config.n;
  spec.seed = config.seed;
  spec.target_rate = config.target_rate;
  if (config.contamination > 0.0) {
    spec.contamination = Contamination{config.contamination, config.contamination_lo, config.contamination_hi};
  }
  if (om == OutcomeModel::External) {
    auto table = std::make_shared<ExternalTable>();
    if (config.input.empty()) {
      *table = api_like_table(config.n, config.seed);
    } else {
      const Dataset d = csv::to_dataset(csv::read_file(config.input), config.outcome, config.covariates);
      if (!d.full_response()) throw Error(ErrorCode::ConfigError, "simulation table must have every outcome observed");
      table->covariates = d.covariates;
      table->names = d.covariate_names;
      table->outcome = d.outcome_filled();
    }
    spec.n = static_cast<std::size_t>(table->covariates.rows());
    spec.table = table;
  }
  const std::vector<EstimatorId> roster = roster_from(config);

  MonteCarloOptions mc;
  mc.threads = config.threads;
  mc.estimation = estimation_options(config);
  // Staged before the run so an unwritable destination fails fast.
  StagedFile reps_file(config.output);
  StagedFile summary_file(summary_path(config));
  StagedFile meta_file(config.output + ".meta");

  const MonteCarloSummary summary = run_monte_carlo(spec, roster, config.reps, config.seed, mc);

  csv::write_row(reps_file.stream(), {"rep", "estimator", "estimate", "converged"});
  for (const ReplicationRecord& r : summary.replications) {
    csv::write_row(reps_file.stream(),
                   {std::to_string(r.rep), r.estimator, format_number(r.estimate), r.converged ? "1" : "0"});
  }
  csv::write_row(summary_file.stream(), {"estimator", "bias", "variance", "rmse", "n_converged", "truth"});
  for (const EstimatorSummary& s : summary.estimators) {
    csv::write_row(summary_file.stream(), {s.estimator, format_number(s.bias), format_number(s.variance),
                                           format_number(s.rmse), std::to_string(s.n_converged),
                                           format_number(summary.truth)});
    log << s.estimator << ": bias=" << format_number(s.bias) << " rmse=" << format_number(s.rmse)
        << " converged=" << s.n_converged << "/" << config.reps << '\n';
  }
  meta_file.stream() << metadata(config) << "summary_output=" << summary_path(config) << '\n'
                     << "truth=" << format_number(summary.truth) << '\n';
  reps_file.commit();
  summary_file.commit();
  meta_file.commit();
  return kSuccess;
}

int cmd_estimate(const RunConfig& config, std::ostream& log) {
  validate(config);
  require_output(config);
  const LoadedInput in = load_input(config);
  StagedFile out(config.output);
  StagedFile meta(config.output + ".meta");
  const std::vector<EstimateReport> reports =
      estimate_all(in.dataset, in.basis, in.design, roster_from(config), estimation_options(config));

  bool all_ok = true;
  csv::write_row(out.stream(),
                 {"estimator", "estimate", "variance", "ci_lo", "ci_hi", "gamma_used", "converged", "diagnostics"});
  for (const EstimateReport& r : reports) {
    const bool ok = r.converged && !r.error;
    all_ok = all_ok && ok;
    csv::write_row(out.stream(), {r.tag, format_number(r.theta), opt_number(r.variance),
                                  r.ci95 ? format_number(r.ci95->first) : "",
                                  r.ci95 ? format_number(r.ci95->second) : "", opt_number(r.gamma_used),
                                  ok ? "1" : "0", r.diagnostics()});
    log << r.tag << ": " << format_number(r.theta);
    if (r.ci95) log << " [" << format_number(r.ci95->first) << ", " << format_number(r.ci95->second) << "]";
    if (!ok) log << " (" << r.message << ")";
    log << '\n';
  }
  meta.stream() << metadata(config) << "n=" << in.dataset.n() << '\n'
                << "n_respondents=" << in.dataset.n_respondents() << '\n';
  out.commit();
  meta.commit();
  return all_ok ? kSuccess : kNonConvergence;
}

int cmd_cv_gamma(const RunConfig& config, std::ostream& log) {
  validate(config);
  require_output(config);
  const LoadedInput in = load_input(config);
  StagedFile out(config.output);
  StagedFile meta(config.output + ".meta");
  const PropensityFit fit =
      in.dataset.full_response() ? full_response_fit(in.design) : fit_logistic_mle(in.dataset, in.design);
  CvOptions cv;
  cv.folds = config.folds;
  cv.seed = config.seed;
  const CvResult result =
      select_gamma_cv(in.basis, in.dataset.outcome_filled(), in.dataset.delta, fit.dhat(), config.gamma_grid, cv);
  csv::write_row(out.stream(), {"gamma", "mspe", "n_eval", "folds_ok", "selected"});
  for (const CvPoint& p : result.profile) {
    csv::write_row(out.stream(), {format_number(p.gamma), format_number(p.mspe), std::to_string(p.n_eval),
                                  std::to_string(p.folds_ok), p.gamma == result.selected ? "1" : "0"});
  }
  for (const std::string& w : result.warnings) log << "warning: " << w << '\n';
  log << "selected gamma=" << format_number(result.selected) << '\n';
  meta.stream() << metadata(config) << "selected_gamma=" << format_number(result.selected) << '\n';
  out.commit();
  meta.commit();
  return kSuccess;
}

int exit_code_for(ErrorCode code, const std::string& command) {
  switch (code) {
    case ErrorCode::IoError: return kIo;
    case ErrorCode::ConfigError:
    case ErrorCode::MissingColumn:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::OutcomePresenceViolation:
    case ErrorCode::EmptyRespondentSet:
    case ErrorCode::NonFiniteBasisValue: return kConfig;
    default: return command == "simulate" ? kConfig : kNonConvergence;
  }
}

int run(const RunConfig& config, std::ostream& log, std::ostream& err) {
  try {
    if (config.command == "simulate") return cmd_simulate(config, log);
    if (config.command == "estimate") return cmd_estimate(config, log);
    if (config.command == "cv-gamma") return cmd_cv_gamma(config, log);
    throw Error(ErrorCode::ConfigError, "unknown command '" + config.command + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code(), config.command);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace trirobust::cli
