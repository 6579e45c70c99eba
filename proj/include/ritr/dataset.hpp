#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ritr/errors.hpp"

namespace ritr {

/// Product of covariate powers; factors are (variable index, exponent > 0),
/// kept sorted by variable. An empty factor list is the constant 1.
struct Monomial {
  std::vector<std::pair<int, int>> factors;

  void normalize() {
    std::sort(factors.begin(), factors.end());
    std::vector<std::pair<int, int>> merged;
    for (const auto& f : factors) {
      if (f.second == 0) continue;
      if (!merged.empty() && merged.back().first == f.first)
        merged.back().second += f.second;
      else
        merged.push_back(f);
    }
    factors = std::move(merged);
  }

  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double v = 1.0;
    for (const auto& [var, exp] : factors) {
      double base = x[var];
      for (int e = 0; e < exp; ++e) v *= base;
    }
    return v;
  }

  bool operator==(const Monomial& other) const { return factors == other.factors; }
};

enum class FeatureMapKind { linear_with_intercept, quadratic_interaction, custom_polynomial };

/// Declarative feature map: an ordered monomial list over a fixed covariate
/// dimension. The first term is always the intercept, evaluation order is
/// the term order, and maps serialize so fits are reproducible.
class FeatureMap {
 public:
  FeatureMap() = default;

  static FeatureMap linear(int input_dim) {
    std::vector<int> vars(static_cast<std::size_t>(input_dim));
    for (int i = 0; i < input_dim; ++i) vars[static_cast<std::size_t>(i)] = i;
    return linear(input_dim, vars);
  }

  static FeatureMap linear(int input_dim, std::vector<int> vars) {
    FeatureMap m;
    m.kind_ = FeatureMapKind::linear_with_intercept;
    m.input_dim_ = input_dim;
    m.vars_ = std::move(vars);
    m.terms_.push_back(Monomial{});
    for (int v : m.vars_) m.terms_.push_back(Monomial{{{v, 1}}});
    m.check();
    return m;
  }

  static FeatureMap quadratic_interaction(int input_dim) {
    std::vector<int> vars(static_cast<std::size_t>(input_dim));
    for (int i = 0; i < input_dim; ++i) vars[static_cast<std::size_t>(i)] = i;
    return quadratic_interaction(input_dim, vars);
  }

  /// Intercept, linear terms, squares, then pairwise products in index order.
  static FeatureMap quadratic_interaction(int input_dim, std::vector<int> vars) {
    FeatureMap m;
    m.kind_ = FeatureMapKind::quadratic_interaction;
    m.input_dim_ = input_dim;
    m.vars_ = std::move(vars);
    m.terms_.push_back(Monomial{});
    for (int v : m.vars_) m.terms_.push_back(Monomial{{{v, 1}}});
    for (int v : m.vars_) m.terms_.push_back(Monomial{{{v, 2}}});
    for (std::size_t i = 0; i < m.vars_.size(); ++i)
      for (std::size_t j = i + 1; j < m.vars_.size(); ++j)
        m.terms_.push_back(Monomial{{{m.vars_[i], 1}, {m.vars_[j], 1}}});
    m.check();
    return m;
  }

  /// Explicit monomial list; an intercept is prepended when absent.
  static FeatureMap custom(int input_dim, std::vector<Monomial> terms) {
    FeatureMap m;
    m.kind_ = FeatureMapKind::custom_polynomial;
    m.input_dim_ = input_dim;
    for (auto& t : terms) t.normalize();
    if (terms.empty() || !terms.front().factors.empty())
      terms.insert(terms.begin(), Monomial{});
    m.terms_ = std::move(terms);
    for (const auto& t : m.terms_)
      for (const auto& [var, exp] : t.factors) {
        (void)exp;
        m.vars_.push_back(var);
      }
    std::sort(m.vars_.begin(), m.vars_.end());
    m.vars_.erase(std::unique(m.vars_.begin(), m.vars_.end()), m.vars_.end());
    m.check();
    return m;
  }

  FeatureMapKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int dim() const { return static_cast<int>(terms_.size()); }
  const std::vector<int>& vars() const { return vars_; }
  const std::vector<Monomial>& terms() const { return terms_; }

  Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x_row) const {
    if (x_row.size() != input_dim_)
      throw schema_error("feature map: covariate row has length " + std::to_string(x_row.size()) +
                         ", expected " + std::to_string(input_dim_));
    Eigen::VectorXd out(dim());
    for (int i = 0; i < dim(); ++i) out[i] = terms_[static_cast<std::size_t>(i)].evaluate(x_row);
    return out;
  }

  bool operator==(const FeatureMap& other) const {
    return kind_ == other.kind_ && input_dim_ == other.input_dim_ && terms_ == other.terms_;
  }

 private:
  void check() const {
    if (input_dim_ < 0) throw schema_error("feature map: negative covariate dimension");
    for (int v : vars_)
      if (v < 0 || v >= input_dim_)
        throw schema_error("feature map: variable index out of range");
    if (terms_.empty() || !terms_.front().factors.empty())
      throw schema_error("feature map: first term must be the intercept");
    for (std::size_t i = 0; i < terms_.size(); ++i)
      for (std::size_t j = i + 1; j < terms_.size(); ++j)
        if (terms_[i] == terms_[j]) throw schema_error("feature map: duplicate term");
  }

  FeatureMapKind kind_ = FeatureMapKind::linear_with_intercept;
  int input_dim_ = 0;
  std::vector<int> vars_;
  std::vector<Monomial> terms_;
};

/// Alias for the operation named in the docs; maps are evaluated in place.
inline Eigen::VectorXd evaluate_features(const FeatureMap& map,
                                         const Eigen::Ref<const Eigen::VectorXd>& x_row) {
  return map.evaluate(x_row);
}

/// Working model: baseline map (coefficients gamma) plus contrast map
/// (coefficients beta, one vector per non-reference arm). Treatment 0 is
/// the reference arm.
struct ModelSpec {
  FeatureMap baseline_map;
  FeatureMap contrast_map;
  int n_treatments = 2;

  void validate() const {
    if (n_treatments < 2) throw schema_error("model spec: need at least 2 treatments");
    if (baseline_map.input_dim() != contrast_map.input_dim())
      throw schema_error("model spec: baseline and contrast maps disagree on covariate dimension");
  }

  int covariate_dim() const { return baseline_map.input_dim(); }
  int design_dim() const {
    return (n_treatments - 1) * contrast_map.dim() + baseline_map.dim();
  }
};

/// Observed data: outcome, covariates, integer treatments 0..K-1 and known
/// propensities for arms 1..K-1 (a single column when K = 2). Immutable by
/// convention after validation.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Eigen::VectorXi a;
  Eigen::MatrixXd prop;
  int n_treatments = 2;
  std::vector<std::string> covariate_names;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return x.cols(); }

  void validate() const {
    if (y.size() < 1) throw schema_error("dataset: empty outcome");
    if (x.rows() != y.size() || a.size() != y.size() || prop.rows() != y.size())
      throw schema_error("dataset: row counts disagree");
    if (n_treatments < 2) throw schema_error("dataset: need at least 2 treatments");
    if (prop.cols() != n_treatments - 1)
      throw schema_error("dataset: propensity matrix must have K-1 columns");
    if (!y.allFinite() || !x.allFinite() || !prop.allFinite())
      throw schema_error("dataset: non-finite entries are not allowed");
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (a[i] < 0 || a[i] >= n_treatments)
        throw schema_error("dataset: treatment label " + std::to_string(a[i]) +
                           " outside 0.." + std::to_string(n_treatments - 1));
    for (Eigen::Index i = 0; i < prop.rows(); ++i) {
      double row_sum = 0.0;
      for (Eigen::Index k = 0; k < prop.cols(); ++k) {
        if (!(prop(i, k) > 0.0 && prop(i, k) < 1.0))
          throw schema_error("dataset: propensity outside (0,1) at row " + std::to_string(i));
        row_sum += prop(i, k);
      }
      if (n_treatments > 2 && !(row_sum < 1.0))
        throw schema_error("dataset: propensities sum to >= 1 at row " + std::to_string(i));
    }
    if (!covariate_names.empty() &&
        static_cast<Eigen::Index>(covariate_names.size()) != x.cols())
      throw schema_error("dataset: covariate name count mismatch");
  }

  /// Probability of the treatment actually received on row i.
  double received_propensity(Eigen::Index i) const {
    if (a[i] >= 1) return prop(i, a[i] - 1);
    return 1.0 - prop.row(i).sum();
  }
};

/// Row of the regression design: treatment-centered contrast features for
/// arms 1..K-1 followed by baseline features.
inline Eigen::VectorXd design_row(const ModelSpec& spec,
                                  const Eigen::Ref<const Eigen::VectorXd>& x_row, int a,
                                  const Eigen::Ref<const Eigen::VectorXd>& prop_row) {
  spec.validate();
  if (a < 0 || a >= spec.n_treatments) throw schema_error("design_row: treatment out of range");
  if (prop_row.size() != spec.n_treatments - 1)
    throw schema_error("design_row: propensity row must have K-1 entries");
  const Eigen::VectorXd cf = spec.contrast_map.evaluate(x_row);
  const Eigen::VectorXd bf = spec.baseline_map.evaluate(x_row);
  Eigen::VectorXd out(spec.design_dim());
  for (int k = 1; k < spec.n_treatments; ++k) {
    const double centered = (a == k ? 1.0 : 0.0) - prop_row[k - 1];
    out.segment(static_cast<Eigen::Index>(k - 1) * cf.size(), cf.size()) = centered * cf;
  }
  out.tail(bf.size()) = bf;
  return out;
}

inline Eigen::MatrixXd design_matrix(const ModelSpec& spec, const Dataset& data) {
  spec.validate();
  if (data.p() != spec.covariate_dim())
    throw schema_error("design_matrix: dataset covariate dimension does not match model spec");
  if (data.n_treatments != spec.n_treatments)
    throw schema_error("design_matrix: treatment count mismatch");
  Eigen::MatrixXd D(data.n(), spec.design_dim());
  for (Eigen::Index i = 0; i < data.n(); ++i)
    D.row(i) = design_row(spec, data.x.row(i), data.a[i], data.prop.row(i)).transpose();
  return D;
}

/// Column roles for CSV ingestion. Treatment labels are mapped through the
/// explicit `treatment_levels` ordering when given; otherwise cells must
/// already be integers 0..K-1. Without a propensity column every arm
/// probability is filled with `propensity_fill`.
struct CsvSchema {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  std::vector<std::string> propensity_columns;
  double propensity_fill = 0.5;
  std::vector<std::string> treatment_levels;
  int n_treatments = 2;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, const std::string& what, std::size_t row) {
  if (cell.empty())
    throw schema_error("csv: empty " + what + " cell at data row " + std::to_string(row));
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size())
    throw schema_error("csv: non-numeric " + what + " value '" + cell + "' at data row " +
                       std::to_string(row));
  return v;
}

}  // namespace detail

inline Dataset load_csv(std::istream& in, const CsvSchema& schema) {
  if (schema.outcome.empty() || schema.treatment.empty() || schema.covariates.empty())
    throw schema_error("csv schema: outcome, treatment and covariates are required");
  std::string line;
  if (!std::getline(in, line)) throw schema_error("csv: missing header row");
  const std::vector<std::string> header = detail::split_csv_line(line);
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw schema_error("csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t y_col = column_of(schema.outcome);
  const std::size_t a_col = column_of(schema.treatment);
  std::vector<std::size_t> x_cols;
  for (const auto& c : schema.covariates) x_cols.push_back(column_of(c));
  std::vector<std::size_t> p_cols;
  for (const auto& c : schema.propensity_columns) p_cols.push_back(column_of(c));
  if (!p_cols.empty() && static_cast<int>(p_cols.size()) != schema.n_treatments - 1)
    throw schema_error("csv schema: need K-1 propensity columns");

  std::vector<double> ys;
  std::vector<int> as;
  std::vector<double> xs;
  std::vector<double> ps;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() < header.size())
      throw schema_error("csv: short row at data row " + std::to_string(row));
    ys.push_back(detail::parse_number(cells[y_col], "outcome", row));

    const std::string& a_cell = cells[a_col];
    int a_val = -1;
    if (!schema.treatment_levels.empty()) {
      const auto it =
          std::find(schema.treatment_levels.begin(), schema.treatment_levels.end(), a_cell);
      if (it == schema.treatment_levels.end())
        throw schema_error("csv: unknown treatment label '" + a_cell + "' at data row " +
                           std::to_string(row));
      a_val = static_cast<int>(it - schema.treatment_levels.begin());
    } else {
      const double v = detail::parse_number(a_cell, "treatment", row);
      a_val = static_cast<int>(std::llround(v));
      if (v != static_cast<double>(a_val))
        throw schema_error("csv: non-integer treatment at data row " + std::to_string(row));
    }
    if (a_val < 0 || a_val >= schema.n_treatments)
      throw schema_error("csv: treatment label " + a_cell + " outside declared range at data row " +
                         std::to_string(row));
    as.push_back(a_val);

    for (std::size_t j = 0; j < x_cols.size(); ++j)
      xs.push_back(detail::parse_number(cells[x_cols[j]], "covariate", row));
    if (p_cols.empty()) {
      for (int k = 1; k < schema.n_treatments; ++k) ps.push_back(schema.propensity_fill);
    } else {
      for (std::size_t j = 0; j < p_cols.size(); ++j)
        ps.push_back(detail::parse_number(cells[p_cols[j]], "propensity", row));
    }
  }
  if (row == 0) throw schema_error("csv: no data rows");

  Dataset d;
  const Eigen::Index n = static_cast<Eigen::Index>(row);
  const Eigen::Index p = static_cast<Eigen::Index>(schema.covariates.size());
  d.n_treatments = schema.n_treatments;
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  d.a = Eigen::Map<Eigen::VectorXi>(as.data(), n);
  d.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      xs.data(), n, p);
  d.prop = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      ps.data(), n, static_cast<Eigen::Index>(schema.n_treatments - 1));
  d.covariate_names = schema.covariates;
  d.validate();
  return d;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw schema_error("csv: cannot open '" + path + "'");
  return load_csv(in, schema);
}

/// Canonical serialization: y, a, covariates, then propensity columns,
/// printed with max precision so a reload reproduces the dataset exactly.
inline void save_csv(const Dataset& data, std::ostream& out) {
  data.validate();
  out << "y,a";
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    if (!data.covariate_names.empty())
      out << ',' << data.covariate_names[static_cast<std::size_t>(j)];
    else
      out << ",x" << (j + 1);
  }
  for (Eigen::Index k = 0; k < data.prop.cols(); ++k) out << ",prop" << (k + 1);
  out << '\n';
  char buf[40];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << ',' << buf;
  };
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", data.y[i]);
    out << buf << ',' << data.a[i];
    for (Eigen::Index j = 0; j < data.p(); ++j) emit(data.x(i, j));
    for (Eigen::Index k = 0; k < data.prop.cols(); ++k) emit(data.prop(i, k));
    out << '\n';
  }
}

/// Schema matching save_csv output for the given dataset.
inline CsvSchema canonical_schema(const Dataset& data) {
  CsvSchema s;
  s.outcome = "y";
  s.treatment = "a";
  for (Eigen::Index j = 0; j < data.p(); ++j)
    s.covariates.push_back(data.covariate_names.empty() ? "x" + std::to_string(j + 1)
                                                        : data.covariate_names[static_cast<std::size_t>(j)]);
  for (Eigen::Index k = 0; k < data.prop.cols(); ++k)
    s.propensity_columns.push_back("prop" + std::to_string(k + 1));
  s.n_treatments = data.n_treatments;
  return s;
}

}  // namespace ritr
