#include "trirobust/gamma_robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "trirobust/error.hpp"
#include "trirobust/linalg.hpp"
#include "trirobust/rng.hpp"

namespace trirobust {

double q_weight(double residual, double sigma2, double gamma) {
  return std::exp(-0.5 * gamma * residual * residual / sigma2);
}

namespace {

constexpr double kDegenerateSigma2 = 1e-8;

struct SigmaSolve {
  double sigma2 = 1.0;
  bool degenerate = false;
};

// Root in s of sum_i w_i q_i(s) (r2_i - s / (1 + gamma)), where
// q_i(s) = exp(-gamma r2_i / (2 s)). Each q_i is rescaled by exp(gamma m / (2 s))
// with m = min r2 so the smallest-residual terms never underflow; the rescaling
// is positive and leaves the roots unchanged.
class SigmaEquation {
 public:
  SigmaEquation(std::vector<double> r2, std::vector<double> w, double gamma)
      : r2_(std::move(r2)), w_(std::move(w)), gamma_(gamma), c_(1.0 + gamma) {
    min_r2_ = *std::min_element(r2_.begin(), r2_.end());
    max_r2_ = *std::max_element(r2_.begin(), r2_.end());
  }

  double max_r2() const { return max_r2_; }

  double value(double s) const {
    double f = 0.0;
    for (std::size_t i = 0; i < r2_.size(); ++i) {
      f += w_[i] * std::exp(-gamma_ * (r2_[i] - min_r2_) / (2.0 * s)) * (r2_[i] - s / c_);
    }
    return f;
  }

  double derivative(double s) const {
    double df = 0.0;
    for (std::size_t i = 0; i < r2_.size(); ++i) {
      const double a = gamma_ * (r2_[i] - min_r2_) / (2.0 * s * s);
      df += w_[i] * std::exp(-gamma_ * (r2_[i] - min_r2_) / (2.0 * s)) * (a * (r2_[i] - s / c_) - 1.0 / c_);
    }
    return df;
  }

 private:
  std::vector<double> r2_, w_;
  double gamma_, c_;
  double min_r2_ = 0.0, max_r2_ = 0.0;
};

// Residuals whose squares are all below `negligible_r2` count as an exact fit.
SigmaSolve solve_sigma2(const Eigen::VectorXd& residual, const Eigen::VectorXd& w0, double gamma,
                        double previous, double negligible_r2) {
  std::vector<double> r2, w;
  for (Eigen::Index i = 0; i < residual.size(); ++i) {
    if (w0(i) > 0.0) {
      r2.push_back(residual(i) * residual(i));
      w.push_back(w0(i));
    }
  }
  if (r2.empty()) throw Error(ErrorCode::InvalidArgument, "sigma2 equation has no weighted rows");
  if (*std::max_element(r2.begin(), r2.end()) <= negligible_r2) return {kDegenerateSigma2, true};

  if (gamma == 0.0) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < r2.size(); ++i) {
      num += w[i] * r2[i];
      den += w[i];
    }
    if (num == 0.0) return {kDegenerateSigma2, true};
    return {num / den, false};
  }

  const SigmaEquation eq(std::move(r2), std::move(w), gamma);
  if (eq.max_r2() == 0.0) return {kDegenerateSigma2, true};
  const double lo = 1e-8 * eq.max_r2();
  const double hi = (1.0 + gamma) * eq.max_r2();

  // Walk outward from the previous value (geometric steps, alternating
  // directions) to the nearest sign change.
  const double s0 = std::clamp(std::isfinite(previous) && previous > 0.0 ? previous : hi, lo, hi);
  const double f0 = eq.value(s0);
  if (f0 == 0.0) return {s0, false};
  double a = 0.0, b = 0.0, fa = 0.0, fb = 0.0;
  bool found = false;
  double up = s0, fup = f0, down = s0, fdown = f0;
  for (int k = 0; k < 200 && !found; ++k) {
    if (up < hi) {
      const double next = std::min(up * 2.0, hi);
      const double fn = eq.value(next);
      if (fn == 0.0) return {next, false};
      if ((fn > 0.0) != (fup > 0.0)) {
        a = up, fa = fup, b = next, fb = fn;
        found = true;
        break;
      }
      up = next, fup = fn;
    }
    if (down > lo) {
      const double next = std::max(down * 0.5, lo);
      const double fn = eq.value(next);
      if (fn == 0.0) return {next, false};
      if ((fn > 0.0) != (fdown > 0.0)) {
        a = next, fa = fn, b = down, fb = fdown;
        found = true;
        break;
      }
      down = next, fdown = fn;
    }
    if (up >= hi && down <= lo) break;
  }
  if (!found) throw Error(ErrorCode::BracketFailure, "sigma2 equation has no sign change in its bracket");

  // Safeguarded Newton inside [a, b].
  double x = 0.5 * (a + b);
  for (int it = 0; it < 200; ++it) {
    const double fx = eq.value(x);
    if (fx == 0.0) break;
    if ((fx > 0.0) == (fa > 0.0)) {
      a = x, fa = fx;
    } else {
      b = x, fb = fx;
    }
    const double df = eq.derivative(x);
    double next = df != 0.0 ? x - fx / df : std::numeric_limits<double>::quiet_NaN();
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::fabs(next - x) <= 1e-15 * x || b - a <= 4.0 * std::numeric_limits<double>::epsilon() * b) {
      x = next;
      break;
    }
    x = next;
  }
  (void)fb;
  return {x, false};
}

Eigen::VectorXd weighted_ls(const BasisMatrix& basis, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const Eigen::Index dim = basis.dim();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    if (w(i) == 0.0) continue;
    const auto b = basis.values.row(i).transpose();
    A.noalias() += w(i) * b * b.transpose();
    c.noalias() += w(i) * y(i) * b;
  }
  return linalg::solve_spd_checked(A, c, ErrorCode::SingularNormalEquations);
}

Eigen::VectorXd q_vector(const Eigen::VectorXd& r, const std::vector<std::uint8_t>& delta, double sigma2,
                         double gamma) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (delta[static_cast<std::size_t>(i)]) q(i) = q_weight(r(i), sigma2, gamma);
  }
  return q;
}

Eigen::VectorXd exp_index(const BasisMatrix& basis, const Eigen::VectorXd& lambda) {
  return (basis.values * lambda).array().exp().matrix();
}

}  // namespace

GammaFit solve_gamma_system(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                            const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                            double gamma, const GammaOptions& options) {
  const Eigen::Index n = basis.rows();
  if (static_cast<std::size_t>(n) != delta.size() || outcomes.size() != n || dhat.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "solve_gamma_system: length mismatch");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidArgument, "gamma must be >= 0");
  const Eigen::Index dim = basis.dim();

  Eigen::VectorXd tilt0 = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd resp = Eigen::VectorXd::Zero(n);
  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!delta[static_cast<std::size_t>(i)]) continue;
    if (!(dhat(i) >= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "inverse propensity d_i must be >= 1", static_cast<std::size_t>(i));
    }
    resp(i) = 1.0;
    tilt0(i) = dhat(i) - 1.0;
    ++n1;
  }
  if (n1 < dim + 1) {
    throw Error(ErrorCode::InvalidArgument, "robust fit needs at least L+2 respondents");
  }
  const bool reweight = !tilt0.isZero(0.0);

  GammaFit fit;
  fit.gamma = gamma;
  fit.lambda = Eigen::VectorXd::Zero(dim);
  fit.beta = weighted_ls(basis, outcomes, resp);
  {
    const Eigen::VectorXd r = outcomes - basis.values * fit.beta;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ss += resp(i) * r(i) * r(i);
    fit.sigma2 = ss > 0.0 ? ss / static_cast<double>(n1) : kDegenerateSigma2;
  }

  // Exact-fit threshold relative to the outcome scale.
  double y2 = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (resp(i) > 0.0) y2 = std::max(y2, outcomes(i) * outcomes(i));
  }
  const double negligible_r2 = 1e-24 * y2;

  const double nd = static_cast<double>(n);
  for (int iter = 1; iter <= options.max_outer_iterations; ++iter) {
    const Eigen::VectorXd w0 =
        reweight ? Eigen::VectorXd(tilt0.cwiseProduct(exp_index(basis, fit.lambda))) : resp;

    // (a) beta
    Eigen::VectorXd r = outcomes - basis.values * fit.beta;
    Eigen::VectorXd q = q_vector(r, delta, fit.sigma2, gamma);
    const Eigen::VectorXd beta = weighted_ls(basis, outcomes, w0.cwiseProduct(q));

    // (b) sigma2
    r = outcomes - basis.values * beta;
    const SigmaSolve ss = solve_sigma2(r, w0, gamma, fit.sigma2, negligible_r2);

    // (c) lambda
    q = q_vector(r, delta, ss.sigma2, gamma);
    Eigen::VectorXd lambda = fit.lambda;
    if (reweight) {
      lambda = solve_tilted_lambda(basis, delta, tilt0.cwiseProduct(q), fit.lambda, options.balancing).lambda;
    }

    const double change = std::max({linalg::max_abs(beta - fit.beta) / (1.0 + linalg::max_abs(beta)),
                                    std::fabs(ss.sigma2 - fit.sigma2) / ss.sigma2,
                                    linalg::max_abs(lambda - fit.lambda)});
    fit.beta = beta;
    fit.sigma2 = ss.sigma2;
    fit.lambda = lambda;
    fit.degenerate_sigma = ss.degenerate;
    fit.q = q;
    fit.outer_iterations = iter;

    if (change > options.parameter_tolerance) continue;

    // Confirm the three equations at the final parameters.
    const Eigen::VectorXd g = reweight ? exp_index(basis, fit.lambda) : Eigen::VectorXd(Eigen::VectorXd::Ones(n));
    const Eigen::VectorXd base = reweight ? tilt0 : resp;
    const Eigen::VectorXd wq = base.cwiseProduct(g).cwiseProduct(q);
    const double c = fit.sigma2 / (1.0 + gamma);
    Eigen::VectorXd beta_eq = Eigen::VectorXd::Zero(dim);
    double sigma_eq = 0.0, wsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (wq(i) == 0.0) continue;
      beta_eq += wq(i) * r(i) * basis.values.row(i).transpose();
      sigma_eq += wq(i) * (r(i) * r(i) - c);
      wsum += wq(i);
    }
    fit.beta_residual = linalg::max_abs(beta_eq) / nd;
    fit.sigma_residual = std::fabs(sigma_eq) / nd;
    fit.calibration_residual =
        reweight ? linalg::max_abs(tilted_calibration_map(basis, delta, tilt0.cwiseProduct(q), fit.lambda)) : 0.0;

    const double scale = std::sqrt(fit.sigma2);
    const bool ok = fit.calibration_residual <= options.residual_tolerance &&
                    fit.beta_residual <= options.residual_tolerance * std::max(1.0, scale) &&
                    (fit.degenerate_sigma || wsum == 0.0 ||
                     fit.sigma_residual <= options.residual_tolerance * std::max(1.0, fit.sigma2));
    if (ok) {
      fit.converged = true;
      return fit;
    }
  }
  throw Error(ErrorCode::NonConvergence, "robust system did not converge within the outer iteration limit");
}

WeightSet gamma_weights(const GammaFit& fit, const Eigen::VectorXd& dhat, const BasisMatrix& basis,
                        const std::vector<std::uint8_t>& delta) {
  const Eigen::Index n = basis.rows();
  if (dhat.size() != n || fit.q.size() != n || static_cast<std::size_t>(n) != delta.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gamma_weights: length mismatch");
  }
  const Eigen::VectorXd g = exp_index(basis, fit.lambda);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (delta[static_cast<std::size_t>(i)]) w(i) = 1.0 + (dhat(i) - 1.0) * g(i) * fit.q(i);
  }
  std::ostringstream tag;
  tag << "APSgamma:" << fit.gamma;
  return make_weight_set(basis, delta, w, tag.str());
}

double gamma_objective(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                       const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                       const Eigen::VectorXd& lambda, const Eigen::VectorXd& beta, double sigma2,
                       double gamma) {
  if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive");
  const Eigen::VectorXd eta = basis.values * lambda;
  const Eigen::VectorXd r = outcomes - basis.values * beta;
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!delta[static_cast<std::size_t>(i)]) continue;
    s += (dhat(i) - 1.0) * std::exp(eta(i)) * q_weight(r(i), sigma2, gamma);
  }
  const double scale = std::pow(2.0 * std::numbers::pi * sigma2, -gamma / (2.0 * (1.0 + gamma)));
  return -scale * s / static_cast<double>(r.size());
}

std::vector<int> stratified_folds(const std::vector<std::uint8_t>& delta, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
  std::vector<std::size_t> resp, nonresp;
  for (std::size_t i = 0; i < delta.size(); ++i) (delta[i] ? resp : nonresp).push_back(i);
  Rng rng = Rng::stream(seed, 0xcf01d5);
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
  };
  shuffle(resp);
  shuffle(nonresp);
  std::vector<int> label(delta.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i : resp) label[i] = static_cast<int>(pos++ % static_cast<std::size_t>(folds));
  for (std::size_t i : nonresp) label[i] = static_cast<int>(pos++ % static_cast<std::size_t>(folds));
  return label;
}

CvResult select_gamma_cv(const BasisMatrix& basis, const Eigen::VectorXd& outcomes,
                         const std::vector<std::uint8_t>& delta, const Eigen::VectorXd& dhat,
                         const std::vector<double>& grid, const CvOptions& options) {
  if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "gamma grid is empty");
  for (double g : grid) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorCode::InvalidArgument, "gamma grid values must be >= 0");
  }
  const Eigen::Index n = basis.rows();
  if (options.folds > n) throw Error(ErrorCode::InvalidArgument, "more folds than observations");
  const std::vector<int> label = stratified_folds(delta, options.folds, options.seed);

  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(options.folds));
  std::vector<std::vector<std::size_t>> held(static_cast<std::size_t>(options.folds));
  for (std::size_t i = 0; i < label.size(); ++i) {
    for (int k = 0; k < options.folds; ++k) {
      (label[i] == k ? held : train)[static_cast<std::size_t>(k)].push_back(i);
    }
  }

  CvResult result;
  for (double gamma : grid) {
    CvPoint point;
    point.gamma = gamma;
    for (int k = 0; k < options.folds; ++k) {
      const auto& rows = train[static_cast<std::size_t>(k)];
      const BasisMatrix sub = subset_rows(basis, rows);
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size())), d(static_cast<Eigen::Index>(rows.size()));
      std::vector<std::uint8_t> dl(rows.size());
      for (std::size_t j = 0; j < rows.size(); ++j) {
        y(static_cast<Eigen::Index>(j)) = outcomes(static_cast<Eigen::Index>(rows[j]));
        d(static_cast<Eigen::Index>(j)) = dhat(static_cast<Eigen::Index>(rows[j]));
        dl[j] = delta[rows[j]];
      }
      try {
        const GammaFit fit = solve_gamma_system(sub, y, dl, d, gamma, options.gamma);
        for (std::size_t i : held[static_cast<std::size_t>(k)]) {
          if (!delta[i]) continue;
          const auto ii = static_cast<Eigen::Index>(i);
          const double e = outcomes(ii) - basis.values.row(ii).dot(fit.beta);
          point.mspe += e * e;
          ++point.n_eval;
        }
        ++point.folds_ok;
      } catch (const Error& err) {
        std::ostringstream msg;
        msg << "gamma=" << gamma << " fold " << k << " skipped: " << err.what();
        result.warnings.push_back(msg.str());
      }
    }
    result.profile.push_back(point);
  }

  bool any = false;
  double best = 0.0;
  for (const CvPoint& p : result.profile) {
    if (p.n_eval == 0) continue;
    const double score = p.mspe / static_cast<double>(p.n_eval);
    if (!any || score < best || (score == best && p.gamma < result.selected)) {
      any = true;
      best = score;
      result.selected = p.gamma;
    }
  }
  if (!any) throw Error(ErrorCode::AllFoldsFailed, "no cross-validation fold could be fitted");
  return result;
}

}  // namespace trirobust
