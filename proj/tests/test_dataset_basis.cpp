#include <doctest.h>

#include <cmath>

#include "trirobust/basis.hpp"
#include "trirobust/dataset.hpp"
#include "trirobust/error.hpp"
#include "trirobust/weights.hpp"

using namespace trirobust;

namespace {

Dataset small_dataset() {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, -1, 0.5, 3, -2, 0, 1;
  return make_dataset(x, {1, 0, 1, 1}, {1.5, std::nullopt, -0.5, 2.0}, {"a", "b"});
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("dataset accessors") {
  const Dataset d = small_dataset();
  CHECK(d.n() == 4);
  CHECK(d.n_respondents() == 3);
  CHECK_FALSE(d.full_response());
  CHECK(d.respondent_rows() == std::vector<std::size_t>{0, 2, 3});
  const Eigen::VectorXd y = d.outcome_filled();
  CHECK(y(1) == 0.0);
  CHECK(y(3) == 2.0);
  CHECK(d.delta_vector().sum() == 3.0);
}

TEST_CASE("dataset validation") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  CHECK(code_of([&] { make_dataset(x, {1, 0}, {1.0, std::nullopt}); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { make_dataset(x, {1, 0, 1}, {1.0, 2.0, 1.0}); }) == ErrorCode::OutcomePresenceViolation);
  CHECK(code_of([&] { make_dataset(x, {1, 1, 1}, {1.0, std::nullopt, 1.0}); }) ==
        ErrorCode::OutcomePresenceViolation);
  CHECK(code_of([&] { make_dataset(x, {0, 0, 0}, {std::nullopt, std::nullopt, std::nullopt}); }) ==
        ErrorCode::EmptyRespondentSet);
  CHECK(code_of([&] { make_dataset(x, {1, 1, 1}, {1.0, NAN, 1.0}); }) == ErrorCode::OutcomePresenceViolation);
  CHECK(code_of([&] { make_dataset(x, {1, 1, 2}, {1.0, 1.0, 1.0}); }) == ErrorCode::ShapeMismatch);

  try {
    make_dataset(x, {1, 0, 1}, {1.0, 2.0, 1.0});
  } catch (const Error& e) {
    REQUIRE(e.row());
    CHECK(*e.row() == 1);
  }
}

TEST_CASE("subset_rows keeps order") {
  const Dataset d = small_dataset();
  const Dataset s = subset_rows(d, {3, 0});
  CHECK(s.n() == 2);
  CHECK(s.covariates(0, 0) == 0.0);
  CHECK(*s.outcome[1] == 1.5);
}

TEST_CASE("linear basis has intercept first and column means") {
  const Dataset d = small_dataset();
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  REQUIRE(b.dim() == 3);
  CHECK(b.names == std::vector<std::string>{"(intercept)", "a", "b"});
  CHECK(b.values.col(0).isOnes());
  CHECK(b.column_means(1) == doctest::Approx(0.75));
  CHECK(b.column_means(2) == doctest::Approx(0.375));
}

TEST_CASE("transform registry resolves tokens") {
  const Dataset d = small_dataset();
  TransformRegistry reg;
  reg.register_transform("ab_sum", [](std::span<const double> r) { return r[0] + r[1]; });
  const BasisSpec spec = reg.parse({"1", "a", "sq(b)", "a*b", "ab_sum", "abs(a)"}, d.covariate_names);
  const BasisMatrix b = build_basis(d, spec);
  REQUIRE(b.dim() == 6);
  CHECK(b.values(1, 2) == doctest::Approx(0.25));
  CHECK(b.values(2, 3) == doctest::Approx(-6.0));
  CHECK(b.values(0, 4) == doctest::Approx(3.0));
  CHECK(b.values(1, 5) == doctest::Approx(1.0));

  CHECK(code_of([&] { reg.parse({"zzz"}, d.covariate_names); }) == ErrorCode::MissingColumn);
  CHECK(code_of([&] { reg.parse({"foo(a)"}, d.covariate_names); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { reg.parse({"a*q"}, d.covariate_names); }) == ErrorCode::MissingColumn);
}

TEST_CASE("non-finite basis values are reported with their cell") {
  const Dataset d = small_dataset();
  TransformRegistry reg;
  const BasisSpec spec = reg.parse({"log(a)"}, d.covariate_names);
  try {
    build_basis(d, spec);
    FAIL("expected NonFiniteBasisValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteBasisValue);
    CHECK(*e.row() == 1);
    CHECK(*e.column() == 1);
  }
}

TEST_CASE("basis_from_values requires an intercept column") {
  Eigen::MatrixXd v(2, 2);
  v << 1, 2, 0.5, 3;
  CHECK(code_of([&] { basis_from_values(v); }) == ErrorCode::InvalidArgument);
  v(1, 0) = 1;
  const BasisMatrix b = basis_from_values(v);
  CHECK(b.column_means(1) == doctest::Approx(2.5));
  const BasisMatrix s = subset_rows(b, {1});
  CHECK(s.column_means(1) == doctest::Approx(3.0));
}

TEST_CASE("weight sets and calibration residual") {
  const Dataset d = small_dataset();
  const BasisMatrix b = build_basis(d, BasisSpec::linear(d));
  Eigen::VectorXd w = Eigen::VectorXd::Constant(4, 4.0 / 3.0);
  const WeightSet ws = make_weight_set(b, d.delta, w, "test");
  CHECK(ws.rows == std::vector<std::size_t>{0, 2, 3});
  CHECK(ws.weights.size() == 3);
  const Eigen::VectorXd full = ws.full_length(4);
  CHECK(full(1) == 0.0);
  // Intercept row balances exactly; the others generally do not.
  const double r = calibration_residual(b, full);
  CHECK(r == doctest::Approx(ws.calibration_residual));
  CHECK(std::abs((full.sum() / 4.0) - 1.0) < 1e-15);
}
