#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trirobust {

enum class ErrorCode {
  InvalidArgument,
  ShapeMismatch,
  OutcomePresenceViolation,
  EmptyRespondentSet,
  NonFiniteBasisValue,
  SeparationDetected,
  SingularHessian,
  MaxIterationsExceeded,
  Unbounded,
  SingularJacobian,
  WeightOverflow,
  Infeasible,
  SingularNormalEquations,
  DegenerateSigma,
  NonConvergence,
  AllFoldsFailed,
  SingularSystem,
  BracketFailure,
  MissingColumn,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; row and
// column are filled when the failure is tied to a cell of the input.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> row = std::nullopt,
        std::optional<std::size_t> column = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> row() const noexcept { return row_; }
  std::optional<std::size_t> column() const noexcept { return column_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> row_;
  std::optional<std::size_t> column_;
};

}  // namespace trirobust
