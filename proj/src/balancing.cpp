#include "trirobust/balancing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "trirobust/error.hpp"
#include "trirobust/linalg.hpp"

namespace trirobust {

namespace {

void check_lengths(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                   const Eigen::VectorXd& v, const char* what) {
  if (static_cast<std::size_t>(basis.rows()) != delta.size() ||
      static_cast<Eigen::Index>(delta.size()) != v.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": length mismatch with basis/delta");
  }
}

Eigen::VectorXd respondent_sum(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(basis.dim());
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    if (delta[static_cast<std::size_t>(i)]) s += basis.values.row(i).transpose();
  }
  return s;
}

// exp(b_i' lambda) for rows with a nonzero tilt; +inf marks overflow.
Eigen::VectorXd tilt_factors(const BasisMatrix& basis, const Eigen::VectorXd& tilt,
                             const Eigen::VectorXd& lambda) {
  const Eigen::VectorXd eta = basis.values * lambda;
  Eigen::VectorXd g(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) g(i) = tilt(i) != 0.0 ? std::exp(eta(i)) : 0.0;
  return g;
}

// Farkas check for a diverged solve: a direction v with v'b_i <= 0 on every
// tilted row and v'T > 0 makes the calibration target T unreachable. The
// divergence direction of lambda is made exact by shifting a constant column.
bool target_outside_cone(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                         const Eigen::VectorXd& tilt, const Eigen::VectorXd& lambda) {
  const double norm = lambda.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) return false;
  Eigen::Index constant = -1;
  for (Eigen::Index j = 0; j < basis.dim() && constant < 0; ++j) {
    const double k = basis.values(0, j);
    if (k > 0.0 && (basis.values.col(j).array() == k).all()) constant = j;
  }
  if (constant < 0) return false;
  Eigen::VectorXd v = lambda / norm;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    if (tilt(i) != 0.0) worst = std::max(worst, basis.values.row(i).dot(v));
  }
  v(constant) -= worst / basis.values(0, constant);
  const Eigen::VectorXd target =
      static_cast<double>(basis.rows()) * basis.column_means - respondent_sum(basis, delta);
  return v.dot(target) > 1e-8 * target.norm();
}

}  // namespace

Eigen::VectorXd tilted_calibration_map(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                                       const Eigen::VectorXd& tilt, const Eigen::VectorXd& lambda) {
  check_lengths(basis, delta, tilt, "tilted_calibration_map");
  const double n = static_cast<double>(basis.rows());
  const Eigen::VectorXd g = tilt_factors(basis, tilt, lambda);
  const Eigen::VectorXd a = tilt.cwiseProduct(g);
  return (respondent_sum(basis, delta) + basis.values.transpose() * a) / n - basis.column_means;
}

Eigen::MatrixXd tilted_calibration_jacobian(const BasisMatrix& basis, const Eigen::VectorXd& tilt,
                                            const Eigen::VectorXd& lambda) {
  const double n = static_cast<double>(basis.rows());
  const Eigen::VectorXd a = tilt.cwiseProduct(tilt_factors(basis, tilt, lambda));
  return basis.values.transpose() * a.asDiagonal() * basis.values / n;
}

LambdaSolve solve_tilted_lambda(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                                const Eigen::VectorXd& tilt,
                                const std::optional<Eigen::VectorXd>& start,
                                const BalancingOptions& options) {
  check_lengths(basis, delta, tilt, "solve_tilted_lambda");
  const Eigen::Index dim = basis.dim();
  for (Eigen::Index i = 0; i < tilt.size(); ++i) {
    if (!(tilt(i) >= 0.0) || !std::isfinite(tilt(i))) {
      throw Error(ErrorCode::InvalidArgument, "calibration tilt must be finite and nonnegative",
                  static_cast<std::size_t>(i));
    }
    if (tilt(i) != 0.0 && !delta[static_cast<std::size_t>(i)]) {
      throw Error(ErrorCode::InvalidArgument, "nonrespondent with nonzero tilt", static_cast<std::size_t>(i));
    }
  }

  LambdaSolve out;
  out.lambda = start ? *start : Eigen::VectorXd::Zero(dim);
  if (out.lambda.size() != dim) throw Error(ErrorCode::ShapeMismatch, "lambda start has wrong length");

  // Degenerate: nothing to tilt (full response or every d_i = 1).
  if (tilt.isZero(0.0)) {
    out.lambda.setZero();
    const Eigen::VectorXd F = tilted_calibration_map(basis, delta, tilt, out.lambda);
    out.residual_history.push_back(linalg::max_abs(F));
    if (out.residual_history.back() <= options.tolerance) {
      out.converged = true;
      return out;
    }
    throw Error(ErrorCode::SingularJacobian, "no unit can be reweighted but calibration does not hold");
  }

  Eigen::VectorXd F = tilted_calibration_map(basis, delta, tilt, out.lambda);
  double merit = F.squaredNorm();
  try {
    for (int iter = 0;; ++iter) {
      const double residual = linalg::max_abs(F);
      out.residual_history.push_back(residual);
      out.iterations = iter;
      if (residual <= options.tolerance) {
        out.converged = true;
        return out;
      }
      if (iter == options.max_iterations) break;

      const Eigen::MatrixXd J = tilted_calibration_jacobian(basis, tilt, out.lambda);
      const Eigen::VectorXd step = linalg::solve_spd_checked(J, -F, ErrorCode::SingularJacobian);

      double t = 1.0;
      bool accepted = false;
      for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
        const Eigen::VectorXd trial = out.lambda + t * step;
        const Eigen::VectorXd eta = basis.values * trial;
        bool overflow = false;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
          if (tilt(i) != 0.0 && !(std::exp(eta(i)) <= options.overflow_bound)) {
            overflow = true;
            break;
          }
        }
        if (overflow) continue;
        const Eigen::VectorXd Ft = tilted_calibration_map(basis, delta, tilt, trial);
        const double mt = Ft.squaredNorm();
        if (std::isfinite(mt) && mt <= (1.0 - 1e-4 * t) * merit) {
          out.lambda = trial;
          F = Ft;
          merit = mt;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        // A full-length step that only fails the overflow guard means the
        // solution itself needs exp(b' lambda) beyond the bound.
        const Eigen::VectorXd eta = basis.values * (out.lambda + step);
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
          if (tilt(i) != 0.0 && std::exp(eta(i)) > options.overflow_bound) {
            throw Error(ErrorCode::WeightOverflow, "exp(b' lambda) exceeds the overflow bound",
                        static_cast<std::size_t>(i));
          }
        }
        throw Error(ErrorCode::MaxIterationsExceeded, "calibration line search failed");
      }
    }
    throw Error(ErrorCode::MaxIterationsExceeded, "calibration Newton iterations exhausted");
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument && target_outside_cone(basis, delta, tilt, out.lambda)) {
      throw Error(ErrorCode::Infeasible, "calibration target lies outside the cone of respondent basis rows");
    }
    throw;
  }
}

LambdaSolve solve_aps_lambda(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                             const std::vector<std::uint8_t>& delta, const BalancingOptions& options) {
  check_lengths(basis, delta, dhat, "solve_aps_lambda");
  Eigen::VectorXd tilt = Eigen::VectorXd::Zero(dhat.size());
  for (Eigen::Index i = 0; i < dhat.size(); ++i) {
    if (!delta[static_cast<std::size_t>(i)]) continue;
    if (!(dhat(i) >= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "inverse propensity d_i must be >= 1", static_cast<std::size_t>(i));
    }
    tilt(i) = dhat(i) - 1.0;
  }
  return solve_tilted_lambda(basis, delta, tilt, std::nullopt, options);
}

WeightSet aps_weights(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                      const Eigen::VectorXd& lambda, const std::vector<std::uint8_t>& delta) {
  check_lengths(basis, delta, dhat, "aps_weights");
  const Eigen::VectorXd eta = basis.values * lambda;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dhat.size());
  for (Eigen::Index i = 0; i < dhat.size(); ++i) {
    if (delta[static_cast<std::size_t>(i)]) w(i) = 1.0 + (dhat(i) - 1.0) * std::exp(eta(i));
  }
  return make_weight_set(basis, delta, w, "APS");
}

EntropyBalancing solve_entropy_balancing(const BasisMatrix& basis, const Eigen::VectorXd& dhat,
                                         const std::vector<std::uint8_t>& delta,
                                         const EntropyBalancingOptions& options) {
  check_lengths(basis, delta, dhat, "solve_entropy_balancing");
  const Eigen::Index n = basis.rows();
  const Eigen::Index L = basis.dim() - 1;

  std::vector<Eigen::Index> resp;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (delta[static_cast<std::size_t>(i)]) {
      if (!(dhat(i) > 0.0)) throw Error(ErrorCode::InvalidArgument, "base weight must be positive",
                                        static_cast<std::size_t>(i));
      resp.push_back(i);
    }
  }
  if (resp.empty()) throw Error(ErrorCode::EmptyRespondentSet, "entropy balancing needs respondents");

  const Eigen::MatrixXd Bt = basis.values.rightCols(L);
  const Eigen::VectorXd target = basis.column_means.tail(L);

  // Normalized tilted weights p_k and log-partition at lambda.
  auto weights_at = [&](const Eigen::VectorXd& lambda, Eigen::VectorXd& p) {
    double shift = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd eta(static_cast<Eigen::Index>(resp.size()));
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Eigen::Index i = resp[k];
      eta(static_cast<Eigen::Index>(k)) = std::log(dhat(i)) + (L > 0 ? Bt.row(i).dot(lambda) : 0.0);
      shift = std::max(shift, eta(static_cast<Eigen::Index>(k)));
    }
    p = (eta.array() - shift).exp();
    const double z = p.sum();
    p /= z;
    return shift + std::log(z) - (L > 0 ? lambda.dot(target) : 0.0);
  };

  EntropyBalancing out;
  out.lambda = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd p;
  double dual = weights_at(out.lambda, p);

  auto finish = [&]() {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < resp.size(); ++k) w(resp[k]) = static_cast<double>(n) * p(static_cast<Eigen::Index>(k));
    out.weights = make_weight_set(basis, delta, w, "HM");
    return out;
  };

  if (L == 0) return finish();

  for (int iter = 0;; ++iter) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(L);
    for (std::size_t k = 0; k < resp.size(); ++k) mean += p(static_cast<Eigen::Index>(k)) * Bt.row(resp[k]).transpose();
    const Eigen::VectorXd grad = mean - target;
    out.iterations = iter;
    if (linalg::max_abs(grad) <= options.tolerance) return finish();
    if (iter == options.max_iterations) break;

    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(L, L);
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Eigen::VectorXd c = Bt.row(resp[k]).transpose() - mean;
      hess.noalias() += p(static_cast<Eigen::Index>(k)) * c * c.transpose();
    }
    Eigen::VectorXd step;
    try {
      step = linalg::solve_spd_checked(hess, -grad, ErrorCode::SingularJacobian);
    } catch (const Error&) {
      if (iter == 0) throw;
      throw Error(ErrorCode::Infeasible, "entropy balancing dual degenerates; targets outside respondent hull");
    }

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Eigen::VectorXd trial = out.lambda + t * step;
      Eigen::VectorXd pt;
      const double dt = weights_at(trial, pt);
      if (std::isfinite(dt) && dt <= dual + 1e-14 * std::fabs(dual)) {
        out.lambda = trial;
        p = pt;
        dual = dt;
        accepted = true;
        break;
      }
    }
    if (!accepted || out.lambda.norm() > options.divergence_bound) {
      throw Error(ErrorCode::Infeasible, "entropy balancing dual diverges; targets outside respondent hull");
    }
  }
  throw Error(ErrorCode::Infeasible, "entropy balancing did not converge within the iteration limit");
}

Eigen::VectorXd ibc_beta(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                         const WeightSet& weights, const std::vector<std::uint8_t>& delta) {
  check_lengths(basis, delta, outcomes, "ibc_beta");
  const Eigen::Index dim = basis.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 0; k < weights.rows.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(weights.rows[k]);
    const double a = weights.weights(static_cast<Eigen::Index>(k)) - 1.0;
    const auto b = basis.values.row(i).transpose();
    A.noalias() += a * b * b.transpose();
    c.noalias() += a * outcomes(i) * b;
  }
  if (A.isZero(0.0)) {
    throw Error(ErrorCode::SingularNormalEquations, "all weights equal one; normal equations vanish");
  }
  return linalg::solve_checked(A, c, ErrorCode::SingularNormalEquations, 1e12);
}

}  // namespace trirobust
