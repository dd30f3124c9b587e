#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "trirobust/balancing.hpp"
#include "trirobust/basis.hpp"
#include "trirobust/error.hpp"
#include "trirobust/estimators.hpp"
#include "trirobust/propensity.hpp"
#include "trirobust/simgen.hpp"

namespace py = pybind11;
using namespace trirobust;

namespace {

// NaN in y marks a nonrespondent.
Dataset dataset_from_arrays(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw Error(ErrorCode::ShapeMismatch, "x and y must have the same number of rows");
  std::vector<std::uint8_t> delta(static_cast<std::size_t>(y.size()));
  std::vector<std::optional<double>> outcome(delta.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    delta[k] = std::isnan(y(i)) ? 0 : 1;
    if (delta[k]) outcome[k] = y(i);
  }
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < x.cols(); ++j) names.push_back("x" + std::to_string(j + 1));
  return make_dataset(x, std::move(delta), std::move(outcome), std::move(names));
}

std::vector<EstimatorId> roster_from(const std::optional<std::vector<std::string>>& tags) {
  if (!tags) return default_roster();
  std::vector<EstimatorId> roster;
  for (const auto& t : *tags) roster.push_back(EstimatorId::parse(t));
  return roster;
}

py::object optional_float(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::dict report_dict(const EstimateReport& r) {
  py::dict d;
  d["estimator"] = r.tag;
  d["theta"] = r.theta;
  d["variance"] = optional_float(r.variance);
  d["ci95"] = r.ci95 ? py::cast(*r.ci95) : py::none();
  d["gamma"] = optional_float(r.gamma_used);
  d["converged"] = r.converged;
  d["error"] = r.error ? py::cast(std::string(to_string(*r.error))) : py::none();
  d["diagnostics"] = r.diagnostics();
  return d;
}

ScenarioSpec scenario_from(const std::string& name, std::size_t n, std::uint64_t seed, double contamination) {
  const auto [om, pm] = parse_scenario_name(name);
  ScenarioSpec spec;
  spec.outcome = om;
  spec.response = pm;
  spec.n = n;
  spec.seed = seed;
  if (contamination > 0.0) spec.contamination = Contamination{contamination, -50.0, 50.0};
  if (om == OutcomeModel::External) spec.table = std::make_shared<ExternalTable>(api_like_table(n, seed));
  return resolve_intercept(spec);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust calibration-weighted mean estimation under nonresponse";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&]() { return py::exception<Error>(m, "TrirobustError", PyExc_RuntimeError); });
  // Solver and validation errors surface as TrirobustError with a .code name.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object instance = type(e.what());
      instance.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(type.ptr(), instance.ptr());
    }
  });

  m.def(
      "estimate",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::optional<std::vector<std::string>> estimators,
         std::optional<std::vector<std::size_t>> propensity_columns, bool with_variance,
         std::optional<std::vector<double>> cv_grid) {
        const Dataset d = dataset_from_arrays(x, y);
        const BasisMatrix basis = build_basis(d, BasisSpec::linear(d));
        const Eigen::MatrixXd design =
            propensity_columns ? design_from_columns(d, *propensity_columns) : default_design(d);
        EstimationOptions opts;
        opts.with_variance = with_variance;
        if (cv_grid) opts.cv_grid = *cv_grid;
        py::list out;
        for (const auto& r : estimate_all(d, basis, design, roster_from(estimators), opts)) out.append(report_dict(r));
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("estimators") = py::none(), py::arg("propensity_columns") = py::none(),
      py::arg("with_variance") = true, py::arg("cv_grid") = py::none(),
      "Estimate the population mean of y (NaN = missing) with a linear basis in x.");

  m.def(
      "generate",
      [](const std::string& scenario, std::size_t n, std::uint64_t seed, double contamination) {
        const Dataset d = generate(scenario_from(scenario, n, seed, contamination));
        Eigen::VectorXd y(static_cast<Eigen::Index>(d.n()));
        for (std::size_t i = 0; i < d.n(); ++i) y(static_cast<Eigen::Index>(i)) = d.outcome[i] ? *d.outcome[i] : NAN;
        return py::make_tuple(d.covariates, y);
      },
      py::arg("scenario"), py::arg("n") = 1000, py::arg("seed") = 1, py::arg("contamination") = 0.0,
      "Draw one simulated dataset; returns (x, y) with NaN for nonrespondents.");

  m.def(
      "simulate",
      [](const std::string& scenario, std::size_t n, std::size_t reps, std::uint64_t seed,
         std::optional<std::vector<std::string>> estimators, double contamination, unsigned threads,
         bool with_variance) {
        const ScenarioSpec spec = scenario_from(scenario, n, seed, contamination);
        MonteCarloOptions opts;
        opts.threads = threads;
        opts.estimation.with_variance = with_variance;
        MonteCarloSummary mc;
        {
          py::gil_scoped_release release;
          mc = run_monte_carlo(spec, roster_from(estimators), reps, seed, opts);
        }
        py::dict summary;
        for (const auto& s : mc.estimators) {
          py::dict e;
          e["mean"] = s.mean;
          e["bias"] = s.bias;
          e["variance"] = s.variance;
          e["rmse"] = s.rmse;
          e["mc_se"] = s.mc_se;
          e["n_converged"] = s.n_converged;
          e["coverage"] = optional_float(s.coverage);
          summary[py::str(s.estimator)] = e;
        }
        py::dict out;
        out["scenario"] = mc.scenario;
        out["truth"] = mc.truth;
        out["estimators"] = summary;
        return out;
      },
      py::arg("scenario"), py::arg("n") = 1000, py::arg("reps") = 100, py::arg("seed") = 1,
      py::arg("estimators") = py::none(), py::arg("contamination") = 0.0, py::arg("threads") = 1,
      py::arg("with_variance") = false, "Monte Carlo bias/RMSE summary for a named scenario.");

  m.def(
      "aps_lambda",
      [](const Eigen::MatrixXd& basis, const Eigen::VectorXd& dhat, const std::vector<std::uint8_t>& delta) {
        const LambdaSolve s = solve_aps_lambda(basis_from_values(basis), dhat, delta);
        return py::make_tuple(s.lambda, s.converged, s.iterations);
      },
      py::arg("basis"), py::arg("dhat"), py::arg("delta"),
      "Solve the augmented calibration equation; returns (lambda, converged, iterations).");

  m.attr("default_roster") = [] {
    std::vector<std::string> tags;
    for (const auto& id : default_roster()) tags.push_back(id.tag());
    return tags;
  }();
}
