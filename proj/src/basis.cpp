#include "trirobust/basis.hpp"

#include <algorithm>
#include <cmath>

#include "trirobust/error.hpp"

namespace trirobust {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::size_t column_index(const std::string& name, const std::vector<std::string>& column_names) {
  const auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) {
    throw Error(ErrorCode::MissingColumn, "unknown column '" + name + "' in basis term");
  }
  return static_cast<std::size_t>(it - column_names.begin());
}

const std::map<std::string, double (*)(double)>& unary_functions() {
  static const std::map<std::string, double (*)(double)> table{
      {"sq", [](double v) { return v * v; }},
      {"cube", [](double v) { return v * v * v; }},
      {"log", [](double v) { return std::log(v); }},
      {"exp", [](double v) { return std::exp(v); }},
      {"sqrt", [](double v) { return std::sqrt(v); }},
      {"abs", [](double v) { return std::fabs(v); }},
  };
  return table;
}

Eigen::VectorXd means_of(const Eigen::MatrixXd& values) {
  Eigen::VectorXd means(values.cols());
  const double n = static_cast<double>(values.rows());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) s += values(i, j);
    means(j) = s / n;
  }
  return means;
}

}  // namespace

BasisSpec::BasisSpec() {
  terms_.push_back(BasisTerm{BasisTerm::Kind::Intercept, "(intercept)", 0, {}});
}

BasisSpec& BasisSpec::add_raw(std::size_t column, std::string name) {
  if (name.empty()) name = "x" + std::to_string(column + 1);
  terms_.push_back(BasisTerm{BasisTerm::Kind::Raw, std::move(name), column, {}});
  return *this;
}

BasisSpec& BasisSpec::add_transform(std::string name, RowFunction fn) {
  if (!fn) throw Error(ErrorCode::InvalidArgument, "transform '" + name + "' has no function");
  terms_.push_back(BasisTerm{BasisTerm::Kind::Transform, std::move(name), 0, std::move(fn)});
  return *this;
}

BasisSpec BasisSpec::linear(const Dataset& dataset) {
  BasisSpec spec;
  for (Eigen::Index j = 0; j < dataset.covariates.cols(); ++j) {
    const auto col = static_cast<std::size_t>(j);
    spec.add_raw(col, dataset.covariate_names.empty() ? std::string{}
                                                      : dataset.covariate_names[col]);
  }
  return spec;
}

std::vector<std::string> BasisSpec::names() const {
  std::vector<std::string> out;
  out.reserve(terms_.size());
  for (const auto& t : terms_) out.push_back(t.name);
  return out;
}

void TransformRegistry::register_transform(const std::string& name, RowFunction fn) {
  if (name.empty() || !fn) throw Error(ErrorCode::InvalidArgument, "invalid transform registration");
  named_[name] = std::move(fn);
}

const RowFunction& TransformRegistry::at(const std::string& name) const {
  const auto it = named_.find(name);
  if (it == named_.end()) throw Error(ErrorCode::InvalidArgument, "unknown transform '" + name + "'");
  return it->second;
}

BasisTerm TransformRegistry::resolve(const std::string& raw_token,
                                     const std::vector<std::string>& column_names) const {
  const std::string token = trim(raw_token);
  if (token.empty()) throw Error(ErrorCode::InvalidArgument, "empty basis term");

  if (const auto it = std::find(column_names.begin(), column_names.end(), token);
      it != column_names.end()) {
    return BasisTerm{BasisTerm::Kind::Raw, token,
                     static_cast<std::size_t>(it - column_names.begin()), {}};
  }
  if (const auto it = named_.find(token); it != named_.end()) {
    return BasisTerm{BasisTerm::Kind::Transform, token, 0, it->second};
  }
  if (const auto star = token.find('*'); star != std::string::npos) {
    const auto a = column_index(trim(token.substr(0, star)), column_names);
    const auto b = column_index(trim(token.substr(star + 1)), column_names);
    return BasisTerm{BasisTerm::Kind::Transform, token, 0,
                     [a, b](std::span<const double> row) { return row[a] * row[b]; }};
  }
  const auto open = token.find('(');
  if (open != std::string::npos && token.back() == ')') {
    const std::string fname = trim(token.substr(0, open));
    const auto& table = unary_functions();
    const auto fit = table.find(fname);
    if (fit == table.end()) {
      throw Error(ErrorCode::InvalidArgument, "unknown transform function '" + fname + "'");
    }
    const auto col = column_index(trim(token.substr(open + 1, token.size() - open - 2)), column_names);
    const auto f = fit->second;
    return BasisTerm{BasisTerm::Kind::Transform, token, 0,
                     [f, col](std::span<const double> row) { return f(row[col]); }};
  }
  throw Error(ErrorCode::MissingColumn, "basis term '" + token + "' is not a known column or transform");
}

BasisSpec TransformRegistry::parse(const std::vector<std::string>& tokens,
                                   const std::vector<std::string>& column_names) const {
  BasisSpec spec;
  for (const auto& tok : tokens) {
    const auto t = trim(tok);
    if (t == "1" || t == "(intercept)" || t == "intercept") continue;
    const BasisTerm term = resolve(t, column_names);
    if (term.kind == BasisTerm::Kind::Raw) {
      spec.add_raw(term.column, term.name);
    } else {
      spec.add_transform(term.name, term.transform);
    }
  }
  return spec;
}

BasisMatrix build_basis(const Dataset& dataset, const BasisSpec& spec) {
  const Eigen::Index n = dataset.covariates.rows();
  const Eigen::Index p = dataset.covariates.cols();
  const auto& terms = spec.terms();
  BasisMatrix out;
  out.values.resize(n, static_cast<Eigen::Index>(terms.size()));
  out.names = spec.names();

  std::vector<double> row(static_cast<std::size_t>(p));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = dataset.covariates(i, j);
    const std::span<const double> view(row);
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& t = terms[k];
      double v = 1.0;
      switch (t.kind) {
        case BasisTerm::Kind::Intercept: v = 1.0; break;
        case BasisTerm::Kind::Raw:
          if (static_cast<Eigen::Index>(t.column) >= p) {
            throw Error(ErrorCode::MissingColumn, "basis term '" + t.name + "' refers to a missing column");
          }
          v = row[t.column];
          break;
        case BasisTerm::Kind::Transform: v = t.transform(view); break;
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFiniteBasisValue, "basis term '" + t.name + "' is not finite",
                    static_cast<std::size_t>(i), k);
      }
      out.values(i, static_cast<Eigen::Index>(k)) = v;
    }
  }
  out.column_means = means_of(out.values);
  return out;
}

BasisMatrix basis_from_values(Eigen::MatrixXd values, std::vector<std::string> names) {
  if (values.cols() == 0 || values.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "basis matrix must be non-empty");
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    if (values(i, 0) != 1.0) throw Error(ErrorCode::InvalidArgument, "basis column 0 must be all ones");
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (!std::isfinite(values(i, j))) {
        throw Error(ErrorCode::NonFiniteBasisValue, "basis value is not finite",
                    static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
  }
  if (names.empty()) {
    names.push_back("(intercept)");
    for (Eigen::Index j = 1; j < values.cols(); ++j) names.push_back("b" + std::to_string(j));
  }
  BasisMatrix out{std::move(values), {}, std::move(names)};
  out.column_means = means_of(out.values);
  return out;
}

BasisMatrix subset_rows(const BasisMatrix& basis, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), basis.values.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    values.row(static_cast<Eigen::Index>(k)) = basis.values.row(static_cast<Eigen::Index>(rows[k]));
  }
  BasisMatrix out{std::move(values), {}, basis.names};
  out.column_means = means_of(out.values);
  return out;
}

}  // namespace trirobust
