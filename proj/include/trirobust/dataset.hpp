#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace trirobust {

// n observations of (x, delta, y-if-observed). Outcomes are optional values;
// a present value marks a respondent, so missingness is never encoded as a
// sentinel number.
struct Dataset {
  Eigen::MatrixXd covariates;                 // n x p_x
  std::vector<std::string> covariate_names;   // empty or p_x names
  std::vector<std::uint8_t> delta;            // n, values in {0, 1}
  std::vector<std::optional<double>> outcome; // n, present iff delta == 1

  std::size_t n() const { return delta.size(); }
  std::size_t n_respondents() const;
  bool full_response() const { return n_respondents() == n(); }

  // delta as a real vector (for weighted sums).
  Eigen::VectorXd delta_vector() const;
  // Outcomes with missing entries set to zero; only ever read under delta = 1.
  Eigen::VectorXd outcome_filled() const;
  std::vector<std::size_t> respondent_rows() const;
  double observed_outcome(std::size_t i) const { return *outcome[i]; }
};

// Builds a dataset from parallel arrays and validates it.
Dataset make_dataset(Eigen::MatrixXd covariates, std::vector<std::uint8_t> delta,
                     std::vector<std::optional<double>> outcome,
                     std::vector<std::string> covariate_names = {});

// Throws ShapeMismatch, OutcomePresenceViolation(row) or EmptyRespondentSet.
void validate(const Dataset& dataset);

// Same dataset restricted to `rows` (in the given order).
Dataset subset_rows(const Dataset& dataset, const std::vector<std::size_t>& rows);

}  // namespace trirobust
