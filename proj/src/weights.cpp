#include "trirobust/weights.hpp"

#include "trirobust/error.hpp"

namespace trirobust {

Eigen::VectorXd WeightSet::full_length(std::size_t n) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(rows[k])) = weights(static_cast<Eigen::Index>(k));
  return out;
}

double calibration_residual(const BasisMatrix& basis, const Eigen::VectorXd& delta_weights) {
  if (delta_weights.size() != basis.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "weights and basis have different row counts");
  }
  const double n = static_cast<double>(basis.rows());
  const Eigen::VectorXd weighted = basis.values.transpose() * delta_weights / n;
  return (weighted - basis.column_means).cwiseAbs().maxCoeff();
}

double calibration_residual(const BasisMatrix& basis, const WeightSet& weights) {
  return calibration_residual(basis, weights.full_length(static_cast<std::size_t>(basis.rows())));
}

WeightSet make_weight_set(const BasisMatrix& basis, const std::vector<std::uint8_t>& delta,
                          const Eigen::VectorXd& full_weights, std::string source) {
  const auto n = delta.size();
  if (static_cast<std::size_t>(full_weights.size()) != n || static_cast<std::size_t>(basis.rows()) != n) {
    throw Error(ErrorCode::ShapeMismatch, "make_weight_set: length mismatch");
  }
  WeightSet ws;
  ws.source = std::move(source);
  for (std::size_t i = 0; i < n; ++i) {
    if (delta[i]) ws.rows.push_back(i);
  }
  ws.weights.resize(static_cast<Eigen::Index>(ws.rows.size()));
  for (std::size_t k = 0; k < ws.rows.size(); ++k) {
    ws.weights(static_cast<Eigen::Index>(k)) = full_weights(static_cast<Eigen::Index>(ws.rows[k]));
  }
  ws.calibration_residual = calibration_residual(basis, ws);
  return ws;
}

}  // namespace trirobust
