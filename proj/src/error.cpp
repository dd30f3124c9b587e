#include "trirobust/error.hpp"

namespace trirobust {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OutcomePresenceViolation: return "OutcomePresenceViolation";
    case ErrorCode::EmptyRespondentSet: return "EmptyRespondentSet";
    case ErrorCode::NonFiniteBasisValue: return "NonFiniteBasisValue";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorCode::Unbounded: return "Unbounded";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::WeightOverflow: return "WeightOverflow";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::DegenerateSigma: return "DegenerateSigma";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::AllFoldsFailed: return "AllFoldsFailed";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& message,
                     std::optional<std::size_t> row,
                     std::optional<std::size_t> column) {
  std::string out(to_string(code));
  out += ": ";
  out += message;
  if (row) out += " (row " + std::to_string(*row);
  if (column) out += (row ? ", column " : " (column ") + std::to_string(*column);
  if (row || column) out += ")";
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::size_t> row, std::optional<std::size_t> column)
    : std::runtime_error(decorate(code, message, row, column)),
      code_(code),
      row_(row),
      column_(column) {}

}  // namespace trirobust
