#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trirobust/error.hpp"

namespace trirobust::cli {

enum ExitCode : int { kSuccess = 0, kConfig = 2, kIo = 3, kNonConvergence = 4 };

struct RunConfig {
  std::string command;  // simulate | estimate | cv-gamma

  // simulate
  std::string scenario = "OM1PM1";  // OM1PM1..OM2PM2, EXTPM3, EXTPM4
  std::size_t n = 1000;
  std::size_t reps = 500;
  double contamination = 0.0;  // fraction of observed outcomes perturbed
  double contamination_lo = -50.0;
  double contamination_hi = 50.0;
  double target_rate = 0.6;
  std::string summary_output;  // default: <output stem>_summary.csv

  // estimate / cv-gamma (and EXT scenarios of simulate)
  std::string input;
  std::string outcome = "y";
  std::vector<std::string> covariates;  // empty: every non-outcome column
  std::vector<std::string> basis;       // empty: intercept + covariates
  std::vector<std::string> propensity;  // empty: intercept + covariates

  std::vector<std::string> estimators;  // empty: default roster
  std::vector<double> gamma_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int folds = 5;
  std::uint64_t seed = 1;
  std::string output;
  unsigned threads = 1;
  bool variance = true;
};

// Checks invariants (grid >= 0, folds >= 2, known command/estimators ...).
// Throws ConfigError.
void validate(const RunConfig& config);

// key=value lines echoing the configuration.
std::string metadata(const RunConfig& config);

// Library entry points; they throw trirobust::Error and leave no partial
// output behind.
int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_estimate(const RunConfig& config, std::ostream& log);
int cmd_cv_gamma(const RunConfig& config, std::ostream& log);

// Dispatches on config.command and maps errors to exit codes
// (2 config/schema, 3 IO, 4 solver failure on estimate).
int run(const RunConfig& config, std::ostream& log, std::ostream& err);

int exit_code_for(ErrorCode code, const std::string& command);

}  // namespace trirobust::cli
