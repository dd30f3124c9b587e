#include "trirobust/dataset.hpp"

#include <cmath>

#include "trirobust/error.hpp"

namespace trirobust {

std::size_t Dataset::n_respondents() const {
  std::size_t count = 0;
  for (auto d : delta) count += d;
  return count;
}

Eigen::VectorXd Dataset::delta_vector() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n()));
  for (std::size_t i = 0; i < n(); ++i) out(static_cast<Eigen::Index>(i)) = delta[i];
  return out;
}

Eigen::VectorXd Dataset::outcome_filled() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n()));
  for (std::size_t i = 0; i < n(); ++i) {
    if (outcome[i]) out(static_cast<Eigen::Index>(i)) = *outcome[i];
  }
  return out;
}

std::vector<std::size_t> Dataset::respondent_rows() const {
  std::vector<std::size_t> rows;
  rows.reserve(n_respondents());
  for (std::size_t i = 0; i < n(); ++i) {
    if (delta[i]) rows.push_back(i);
  }
  return rows;
}

Dataset make_dataset(Eigen::MatrixXd covariates, std::vector<std::uint8_t> delta,
                     std::vector<std::optional<double>> outcome,
                     std::vector<std::string> covariate_names) {
  Dataset d{std::move(covariates), std::move(covariate_names), std::move(delta),
            std::move(outcome)};
  validate(d);
  return d;
}

void validate(const Dataset& dataset) {
  const std::size_t n = dataset.delta.size();
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "dataset has no rows");
  if (dataset.outcome.size() != n || static_cast<std::size_t>(dataset.covariates.rows()) != n) {
    throw Error(ErrorCode::ShapeMismatch,
                "delta, outcome and covariate rows must have equal length");
  }
  if (!dataset.covariate_names.empty() &&
      dataset.covariate_names.size() != static_cast<std::size_t>(dataset.covariates.cols())) {
    throw Error(ErrorCode::ShapeMismatch, "covariate_names does not match covariate columns");
  }
  std::size_t respondents = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = dataset.delta[i];
    if (d > 1) throw Error(ErrorCode::ShapeMismatch, "delta must be 0 or 1", i);
    if (static_cast<bool>(d) != dataset.outcome[i].has_value()) {
      throw Error(ErrorCode::OutcomePresenceViolation,
                  "outcome must be present exactly when delta = 1", i);
    }
    if (d && !std::isfinite(*dataset.outcome[i])) {
      throw Error(ErrorCode::OutcomePresenceViolation, "observed outcome is not finite", i);
    }
    respondents += d;
  }
  for (Eigen::Index i = 0; i < dataset.covariates.rows(); ++i) {
    for (Eigen::Index j = 0; j < dataset.covariates.cols(); ++j) {
      if (!std::isfinite(dataset.covariates(i, j))) {
        throw Error(ErrorCode::ShapeMismatch, "covariate value is not finite",
                    static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
  }
  if (respondents == 0) throw Error(ErrorCode::EmptyRespondentSet, "no respondents (all delta = 0)");
}

Dataset subset_rows(const Dataset& dataset, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), dataset.covariates.cols());
  out.covariate_names = dataset.covariate_names;
  out.delta.reserve(rows.size());
  out.outcome.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    out.covariates.row(static_cast<Eigen::Index>(k)) =
        dataset.covariates.row(static_cast<Eigen::Index>(i));
    out.delta.push_back(dataset.delta[i]);
    out.outcome.push_back(dataset.outcome[i]);
  }
  return out;
}

}  // namespace trirobust
