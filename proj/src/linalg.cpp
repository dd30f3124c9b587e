#include "trirobust/linalg.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace trirobust::linalg {

namespace {

struct Equilibrated {
  Eigen::MatrixXd scaled;
  Eigen::VectorXd row_scale;
  Eigen::VectorXd col_scale;
};

Equilibrated equilibrate(const Eigen::MatrixXd& A) {
  Equilibrated e{A, Eigen::VectorXd::Ones(A.rows()), Eigen::VectorXd::Ones(A.cols())};
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double m = e.scaled.row(i).cwiseAbs().maxCoeff();
    if (m > 0.0) {
      e.row_scale(i) = 1.0 / m;
      e.scaled.row(i) *= e.row_scale(i);
    }
  }
  for (Eigen::Index j = 0; j < A.cols(); ++j) {
    const double m = e.scaled.col(j).cwiseAbs().maxCoeff();
    if (m > 0.0) {
      e.col_scale(j) = 1.0 / m;
      e.scaled.col(j) *= e.col_scale(j);
    }
  }
  return e;
}

double condition_of(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0) || !std::isfinite(smax)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

[[noreturn]] void fail(ErrorCode code, double cond) {
  std::ostringstream msg;
  msg << "linear system is singular or ill-conditioned (condition number " << cond << ")";
  throw Error(code, msg.str());
}

}  // namespace

double equilibrated_condition(const Eigen::MatrixXd& A) {
  return condition_of(equilibrate(A).scaled);
}

Eigen::VectorXd solve_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              ErrorCode code, double max_condition, double* condition_out) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch, "solve_checked: incompatible dimensions");
  }
  if (A.rows() == 0) return Eigen::VectorXd(0);
  if (!A.allFinite() || !b.allFinite()) fail(code, std::numeric_limits<double>::infinity());
  const Equilibrated e = equilibrate(A);
  const double cond = condition_of(e.scaled);
  if (condition_out) *condition_out = cond;
  if (!(cond <= max_condition)) fail(code, cond);
  const Eigen::VectorXd rhs = e.row_scale.asDiagonal() * b;
  const Eigen::VectorXd z = e.scaled.colPivHouseholderQr().solve(rhs);
  return e.col_scale.asDiagonal() * z;
}

Eigen::VectorXd solve_spd_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                  ErrorCode code, double max_condition) {
  if (A.rows() != A.cols() || A.rows() != b.size()) {
    throw Error(ErrorCode::ShapeMismatch, "solve_spd_checked: incompatible dimensions");
  }
  if (A.rows() == 0) return Eigen::VectorXd(0);
  if (!A.allFinite() || !b.allFinite()) fail(code, std::numeric_limits<double>::infinity());
  // Symmetric diagonal scaling keeps the scaled matrix symmetric.
  Eigen::VectorXd s(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double d = A(i, i);
    if (!(d > 0.0)) fail(code, std::numeric_limits<double>::infinity());
    s(i) = 1.0 / std::sqrt(d);
  }
  const Eigen::MatrixXd scaled = s.asDiagonal() * A * s.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  if (ldlt.info() != Eigen::Success) fail(code, std::numeric_limits<double>::infinity());
  const double rcond = ldlt.rcond();
  const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(cond <= max_condition)) fail(code, cond);
  const Eigen::VectorXd z = ldlt.solve(s.asDiagonal() * b);
  return s.asDiagonal() * z;
}

}  // namespace trirobust::linalg
