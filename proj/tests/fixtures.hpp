#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/basis.hpp"
#include "trirobust/dataset.hpp"
#include "trirobust/propensity.hpp"
#include "trirobust/rng.hpp"

namespace fixture {

using trirobust::BasisMatrix;
using trirobust::Dataset;
using trirobust::PropensityFit;

struct Instance {
  Dataset data;
  BasisMatrix basis;
  Eigen::MatrixXd design;
  PropensityFit fit;
  Eigen::VectorXd dhat;
  Eigen::VectorXd y;  // outcomes, zero at nonrespondents
};

// n rows, L standard-normal covariates, logistic response with ~60% rate,
// linear outcome with unit noise. The basis is (1, x_1..x_L); the propensity
// design uses every covariate as well unless `design_columns` restricts it.
inline Instance random_instance(std::uint64_t seed, std::size_t n, int L, double outlier_fraction = 0.0,
                                std::optional<std::vector<std::size_t>> design_columns = std::nullopt,
                                std::optional<std::vector<std::size_t>> basis_columns = std::nullopt) {
  trirobust::Rng rng = trirobust::Rng::stream(seed, 77);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), L);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < L; ++j) x(static_cast<Eigen::Index>(i), j) = rng.normal();
  }
  Eigen::VectorXd coef(L);
  for (int j = 0; j < L; ++j) coef(j) = rng.uniform(-0.6, 0.6);
  std::vector<std::uint8_t> delta(n);
  std::vector<std::optional<double>> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double eta = 0.4 + x.row(ii).dot(coef);
    delta[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-eta)));
    double yi = 1.0 + x.row(ii).sum() + rng.normal();
    if (rng.uniform() < outlier_fraction) yi += rng.uniform(-50.0, 50.0);
    if (delta[i]) y[i] = yi;
  }
  std::vector<std::string> names;
  for (int j = 0; j < L; ++j) names.push_back("x" + std::to_string(j + 1));

  Instance inst;
  inst.data = trirobust::make_dataset(x, delta, y, names);
  trirobust::BasisSpec spec;
  if (basis_columns) {
    for (std::size_t c : *basis_columns) spec.add_raw(c, names[c]);
  } else {
    spec = trirobust::BasisSpec::linear(inst.data);
  }
  inst.basis = trirobust::build_basis(inst.data, spec);
  inst.design = design_columns ? trirobust::design_from_columns(inst.data, *design_columns)
                               : trirobust::default_design(inst.data);
  inst.fit = trirobust::fit_logistic_mle(inst.data, inst.design);
  inst.dhat = inst.fit.dhat();
  inst.y = inst.data.outcome_filled();
  return inst;
}

// Hand-built propensity fit with given probabilities and an intercept-only design.
inline PropensityFit fixed_fit(const Eigen::VectorXd& pi) {
  PropensityFit f;
  f.phi = Eigen::VectorXd::Zero(1);
  f.fitted = pi;
  f.method = trirobust::PropensityMethod::Mle;
  f.design = Eigen::MatrixXd::Ones(pi.size(), 1);
  return f;
}

}  // namespace fixture
