// trirobust: robust mean estimation under nonresponse.
//
//   trirobust simulate --scenario OM1PM1 --reps 500 --output reps.csv
//   trirobust estimate --input data.csv --outcome y --output est.csv
//   trirobust cv-gamma --input data.csv --outcome y --output cv.csv
//
// Any option may also come from a key=value config file (--config); flags on
// the command line win.

#include <iostream>

#include <CLI11.hpp>

#include "trirobust/cli.hpp"

namespace {

void add_common(CLI::App* sub, trirobust::cli::RunConfig& cfg) {
  sub->set_config("--config", "", "key=value configuration file (command-line flags win)", false);
  sub->add_option("--estimators", cfg.estimators, "CC GLM HM Tan APS APSgamma:<g> APSgamma:cv")->delimiter(',');
  sub->add_option("--gamma-grid", cfg.gamma_grid, "gamma values for cross-validation")->delimiter(',');
  sub->add_option("--folds", cfg.folds, "cross-validation folds");
  sub->add_option("--seed", cfg.seed, "random seed");
  sub->add_option("--output,-o", cfg.output, "output CSV")->required();
  sub->add_option("--threads", cfg.threads, "worker threads");
  sub->add_flag("!--no-variance", cfg.variance, "skip influence-function variances");
}

void add_input(CLI::App* sub, trirobust::cli::RunConfig& cfg, bool required) {
  auto* in = sub->add_option("--input,-i", cfg.input, "input CSV (header row; empty or NA outcome = missing)");
  if (required) in->required();
  sub->add_option("--outcome", cfg.outcome, "outcome column");
  sub->add_option("--covariates", cfg.covariates, "covariate columns (default: all but outcome)")->delimiter(',');
  sub->add_option("--basis", cfg.basis, "basis terms: column, fn(column), a*b")->delimiter(',');
  sub->add_option("--propensity", cfg.propensity, "propensity design columns")->delimiter(',');
}

}  // namespace

int main(int argc, char** argv) {
  trirobust::cli::RunConfig cfg;
  CLI::App app{"Doubly and triply robust estimation of a mean with missing outcomes"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo study of the estimators");
  sim->add_option("--scenario", cfg.scenario, "OM1PM1, OM1PM2, OM2PM1, OM2PM2, EXTPM3, EXTPM4");
  sim->add_option("--n", cfg.n, "sample size");
  sim->add_option("--reps", cfg.reps, "replications");
  sim->add_option("--contamination", cfg.contamination, "fraction of observed outcomes contaminated");
  sim->add_option("--contamination-lo", cfg.contamination_lo, "lower end of the uniform noise");
  sim->add_option("--contamination-hi", cfg.contamination_hi, "upper end of the uniform noise");
  sim->add_option("--response-rate", cfg.target_rate, "target response rate");
  sim->add_option("--summary", cfg.summary_output, "summary CSV (default: <output>_summary.csv)");
  add_common(sim, cfg);
  add_input(sim, cfg, false);

  auto* est = app.add_subcommand("estimate", "Estimate the outcome mean from a CSV file");
  add_common(est, cfg);
  add_input(est, cfg, true);

  auto* cv = app.add_subcommand("cv-gamma", "Cross-validate the robustness parameter gamma");
  add_common(cv, cfg);
  add_input(cv, cfg, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : trirobust::cli::kConfig;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return trirobust::cli::run(cfg, std::cout, std::cerr);
}
