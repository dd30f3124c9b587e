#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trirobust/dataset.hpp"

namespace trirobust {

// A named pure function of one covariate row.
using RowFunction = std::function<double(std::span<const double>)>;

struct BasisTerm {
  enum class Kind { Intercept, Raw, Transform };
  Kind kind = Kind::Intercept;
  std::string name;
  std::size_t column = 0;  // Raw only
  RowFunction transform;   // Transform only
};

// Ordered basis b_0 = 1, b_1, ..., b_L. The intercept is always present and
// always first; it cannot be removed.
class BasisSpec {
 public:
  BasisSpec();

  BasisSpec& add_raw(std::size_t column, std::string name = {});
  BasisSpec& add_transform(std::string name, RowFunction fn);

  // (1, x_1, ..., x_p) over every covariate column of `dataset`.
  static BasisSpec linear(const Dataset& dataset);

  std::size_t size() const { return terms_.size(); }
  const std::vector<BasisTerm>& terms() const { return terms_; }
  std::vector<std::string> names() const;

 private:
  std::vector<BasisTerm> terms_;
};

// Name -> row function table used to resolve basis terms from text (CLI and
// config files). Built-in unary transforms are applied as `fn(column)`:
// sq, cube, log, exp, sqrt, abs. Products are written `a*b`.
class TransformRegistry {
 public:
  TransformRegistry() = default;

  void register_transform(const std::string& name, RowFunction fn);
  bool contains(const std::string& name) const { return named_.count(name) > 0; }
  const RowFunction& at(const std::string& name) const;

  // Resolves one token against `column_names`: a column name, a registered
  // transform name, `fn(column)` or `a*b`. Throws MissingColumn or
  // InvalidArgument on failure.
  BasisTerm resolve(const std::string& token, const std::vector<std::string>& column_names) const;

  BasisSpec parse(const std::vector<std::string>& tokens,
                  const std::vector<std::string>& column_names) const;

 private:
  std::map<std::string, RowFunction> named_;
};

struct BasisMatrix {
  Eigen::MatrixXd values;        // n x (L+1), column 0 all ones
  Eigen::VectorXd column_means;  // n^{-1} sum_i b_j(x_i)
  std::vector<std::string> names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

// Throws NonFiniteBasisValue(row, column) on any NaN/inf evaluation.
BasisMatrix build_basis(const Dataset& dataset, const BasisSpec& spec);

// Wraps precomputed values (column 0 must be all ones).
BasisMatrix basis_from_values(Eigen::MatrixXd values, std::vector<std::string> names = {});

BasisMatrix subset_rows(const BasisMatrix& basis, const std::vector<std::size_t>& rows);

}  // namespace trirobust
