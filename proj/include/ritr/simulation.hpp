#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "ritr/parallel.hpp"
#include "ritr/policy.hpp"
#include "ritr/rng.hpp"

namespace ritr {

/// Generative specification for one simulation cell. Models I/II draw
/// p = 3 AR(1)-correlated normals; the interaction family draws p = 2
/// uniforms and pairs only with the treatment-interacted sigma.
struct Scenario {
  TruthFamily family = TruthFamily::model_I;
  ErrorLaw error_law = ErrorLaw::normal;
  SigmaKind sigma_kind = SigmaKind::homogeneous;
  PropensityLaw propensity = PropensityLaw::constant_half;
  double d0 = 0.0;
  int n = 400;
  int replications = 200;
  int validation_size = 10000;
  std::uint64_t seed = 20240801;

  void validate() const {
    if (n < 1 || replications < 1 || validation_size < 1)
      throw schema_error("scenario: sizes must be positive");
    if (family == TruthFamily::interaction) {
      if (sigma_kind != SigmaKind::treatment_interacted)
        throw schema_error("scenario: interaction family requires treatment-interacted sigma");
      if (!(d0 > 0.0)) throw schema_error("scenario: interaction family requires d0 > 0");
      if (error_law == ErrorLaw::log_normal || error_law == ErrorLaw::cauchy)
        throw schema_error("scenario: interaction family uses normal or centered-gamma errors");
    } else if (sigma_kind == SigmaKind::treatment_interacted) {
      throw schema_error("scenario: treatment-interacted sigma requires the interaction family");
    }
  }

  int p() const { return family == TruthFamily::interaction ? 2 : 3; }

  TruthModel truth() const {
    TruthModel t;
    t.family = family;
    t.sigma_kind = sigma_kind;
    t.d0 = d0;
    t.error_law = error_law;
    t.propensity_law = propensity;
    if (family == TruthFamily::interaction) {
      t.beta0.resize(3);
      t.beta0 << 0.5, 2.0, -1.0;
    } else {
      t.beta0.resize(4);
      t.beta0 << 0.0, 1.0, -1.0, 1.0;
      if (family == TruthFamily::model_II) {
        t.gamma0.resize(4);
        t.gamma0 << 0.5, 4.0, 1.0, -3.0;
      }
    }
    return t;
  }

  /// Working model used by every method in the studies: linear baseline,
  /// linear contrast for Models I/II and the quadratic-interaction contrast
  /// for the interaction family.
  ModelSpec working_spec() const {
    ModelSpec spec;
    spec.baseline_map = FeatureMap::linear(p());
    spec.contrast_map = family == TruthFamily::interaction
                            ? FeatureMap::quadratic_interaction(p())
                            : FeatureMap::linear(p());
    return spec;
  }
};

namespace detail {

/// Cholesky factor of the AR(1)-style correlation Corr(Xj, Xk) = 0.5^|j-k|.
inline Eigen::MatrixXd ar_half_cholesky(int p) {
  Eigen::MatrixXd corr(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = 0; k < p; ++k) corr(j, k) = std::pow(0.5, std::abs(j - k));
  return Eigen::LLT<Eigen::MatrixXd>(corr).matrixL();
}

inline double draw_error(ErrorLaw law, RandomStream& rng) {
  switch (law) {
    case ErrorLaw::normal: return rng.normal();
    case ErrorLaw::log_normal: return rng.log_normal() - std::exp(0.5);  // mean-centered
    case ErrorLaw::cauchy: return rng.cauchy();
    case ErrorLaw::gamma_centered: return rng.gamma_centered();
  }
  return 0.0;
}

inline Eigen::MatrixXd draw_covariates(const Scenario& sc, int rows, RandomStream& rng) {
  const int p = sc.p();
  Eigen::MatrixXd x(rows, p);
  if (sc.family == TruthFamily::interaction) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
  } else {
    const Eigen::MatrixXd chol = ar_half_cholesky(p);
    Eigen::VectorXd z(p);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < p; ++j) z[j] = rng.normal();
      x.row(i) = (chol * z).transpose();
    }
  }
  return x;
}

}  // namespace detail

/// Draws one dataset for the scenario. Deterministic in (seed,
/// replicate_index); the validation draw uses a separate substream.
inline std::pair<Dataset, TruthModel> generate(const Scenario& sc, int replicate_index) {
  sc.validate();
  const TruthModel truth = sc.truth();
  RandomStream rng = RandomStream::derive(sc.seed, static_cast<std::uint64_t>(replicate_index), 1);
  Dataset data;
  data.n_treatments = 2;
  data.x = detail::draw_covariates(sc, sc.n, rng);
  data.y.resize(sc.n);
  data.a.resize(sc.n);
  data.prop.resize(sc.n, 1);
  for (int i = 0; i < sc.n; ++i) {
    const Eigen::VectorXd x = data.x.row(i);
    const double pi = truth.propensity(x);
    const int a = rng.bernoulli(pi);
    const double eps = detail::draw_error(sc.error_law, rng);
    data.a[i] = a;
    data.prop(i, 0) = pi;
    data.y[i] = truth.phi0(x) + (static_cast<double>(a) - pi) * truth.contrast0(x) +
                truth.sigma(x, a) * eps;
  }
  data.validate();
  return {std::move(data), truth};
}

/// Fresh validation covariates for the replicate, independent of the
/// training draw.
inline Eigen::MatrixXd generate_validation(const Scenario& sc, int replicate_index) {
  sc.validate();
  RandomStream rng = RandomStream::derive(sc.seed, static_cast<std::uint64_t>(replicate_index), 2);
  return detail::draw_covariates(sc, sc.validation_size, rng);
}

/// An estimation method entered in a study: a loss plus its display label.
struct Method {
  LossSpec loss;
  std::string label;

  static Method ls() { return {LossSpec::squared(), "LS"}; }
  static Method pinball(double tau) {
    return {LossSpec::pinball(tau), "P(" + (tau == 0.5 ? std::string("0.5") : tau == 0.25 ? std::string("0.25") : std::to_string(tau)) + ")"};
  }
  static Method huber_auto() { return {LossSpec::huber_auto(), "Huber"}; }

  static std::vector<Method> standard_four() {
    return {ls(), pinball(0.5), pinball(0.25), huber_auto()};
  }
};

struct MetricAggregate {
  bool defined = false;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double mc_se = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

/// Per-method summary of one scenario cell. mse is undefined either when
/// the family makes it meaningless (interaction) or when its running mean
/// exploded past the suppression threshold.
struct CellResult {
  std::string method;
  MetricAggregate mse;
  MetricAggregate pcd;
  MetricAggregate delta_mu;
  MetricAggregate delta_05;
  MetricAggregate delta_025;
  bool mse_suppressed = false;
  int n_failed = 0;
};

namespace detail {

constexpr double kMseExplosionThreshold = 1e4;

inline MetricAggregate aggregate(const std::vector<double>& values) {
  MetricAggregate out;
  out.count = static_cast<int>(values.size());
  if (values.empty()) return out;
  const Eigen::Map<const Eigen::VectorXd> v(values.data(),
                                            static_cast<Eigen::Index>(values.size()));
  out.defined = true;
  out.mean = v.mean();
  out.mc_se = values.size() > 1 ? sample_sd(v) / std::sqrt(static_cast<double>(values.size()))
                                : 0.0;
  return out;
}

struct ReplicateMetrics {
  bool failed = false;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double pcd = std::numeric_limits<double>::quiet_NaN();
  double delta_mu = std::numeric_limits<double>::quiet_NaN();
  double delta_05 = std::numeric_limits<double>::quiet_NaN();
  double delta_025 = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace detail

/// Runs the scenario's replicates for each method: fit, then evaluate mse
/// and PCD (Models I/II) and the value gaps on a fresh validation set.
/// Replicates are independent tasks; aggregation in replicate order makes
/// serial and parallel runs identical.
inline std::vector<CellResult> run_cell(const Scenario& sc, const std::vector<Method>& methods,
                                        const SolverConfig& cfg = {}, int jobs = 1) {
  sc.validate();
  if (methods.empty()) throw schema_error("run_cell: no methods given");
  const bool interaction = sc.family == TruthFamily::interaction;
  const ModelSpec spec = sc.working_spec();
  const std::vector<double> tau_list =
      interaction ? std::vector<double>{0.5, 0.25} : std::vector<double>{0.5};

  std::vector<std::vector<detail::ReplicateMetrics>> results(
      methods.size(), std::vector<detail::ReplicateMetrics>(static_cast<std::size_t>(sc.replications)));

  parallel_for_index(sc.replications, jobs, [&](int rep) {
    const auto [data, truth] = generate(sc, rep);
    const Eigen::MatrixXd vx = generate_validation(sc, rep);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      detail::ReplicateMetrics& out = results[m][static_cast<std::size_t>(rep)];
      try {
        const FittedModel fit = fit_rr(data, spec, methods[m].loss, cfg);
        const TreatmentRule rule = TreatmentRule::from_model(fit);
        if (!interaction) {
          out.mse = (fit.beta[0] - truth.beta0).squaredNorm();
          out.pcd = pcd(rule, truth, vx);
        }
        const DeltaMetrics deltas = delta_metrics(rule, truth, vx, tau_list);
        if (deltas.delta_mu) out.delta_mu = *deltas.delta_mu;
        out.delta_05 = deltas.at(0.5);
        if (interaction) out.delta_025 = deltas.at(0.25);
      } catch (const schema_error&) {
        throw;
      } catch (...) {
        out.failed = true;
      }
    }
  });

  std::vector<CellResult> cells;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    CellResult cell;
    cell.method = methods[m].label;
    std::vector<double> mses, pcds, dmus, d05s, d025s;
    double mse_running_sum = 0.0;
    for (const detail::ReplicateMetrics& r : results[m]) {
      if (r.failed) {
        ++cell.n_failed;
        continue;
      }
      if (std::isfinite(r.mse)) {
        mses.push_back(r.mse);
        mse_running_sum += r.mse;
        if (mse_running_sum / static_cast<double>(mses.size()) > detail::kMseExplosionThreshold)
          cell.mse_suppressed = true;
      }
      if (std::isfinite(r.pcd)) pcds.push_back(r.pcd);
      if (std::isfinite(r.delta_mu)) dmus.push_back(r.delta_mu);
      if (std::isfinite(r.delta_05)) d05s.push_back(r.delta_05);
      if (std::isfinite(r.delta_025)) d025s.push_back(r.delta_025);
    }
    cell.mse = detail::aggregate(mses);
    if (cell.mse_suppressed) {
      cell.mse.defined = false;
      cell.mse.mean = std::numeric_limits<double>::quiet_NaN();
      cell.mse.mc_se = std::numeric_limits<double>::quiet_NaN();
    }
    cell.pcd = detail::aggregate(pcds);
    cell.delta_mu = detail::aggregate(dmus);
    cell.delta_05 = detail::aggregate(d05s);
    cell.delta_025 = detail::aggregate(d025s);
    cells.push_back(std::move(cell));
  }
  return cells;
}

/// Overrides applied to every scenario of a table run.
struct TableOptions {
  int replications = 200;
  int validation_size = 10000;
  std::uint64_t seed = 20240801;
  std::vector<int> n_values = {100, 200, 400, 800};
  std::vector<Method> methods = Method::standard_four();
  int jobs = 1;
};

struct TableRow {
  Scenario scenario;
  CellResult cell;
};

namespace detail {

inline const char* error_name(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::normal: return "normal";
    case ErrorLaw::log_normal: return "log_normal";
    case ErrorLaw::cauchy: return "cauchy";
    case ErrorLaw::gamma_centered: return "gamma_centered";
  }
  return "?";
}

inline const char* sigma_name(SigmaKind s) {
  switch (s) {
    case SigmaKind::homogeneous: return "homogeneous";
    case SigmaKind::heterogeneous_x: return "heterogeneous_x";
    case SigmaKind::treatment_interacted: return "treatment_interacted";
  }
  return "?";
}

inline const char* family_name(TruthFamily f) {
  switch (f) {
    case TruthFamily::model_I: return "model_I";
    case TruthFamily::model_II: return "model_II";
    case TruthFamily::interaction: return "interaction";
  }
  return "?";
}

inline const char* propensity_name(PropensityLaw p) {
  return p == PropensityLaw::constant_half ? "constant_half" : "expit_diff";
}

inline void emit_metric(std::ostream& out, const Scenario& sc, const std::string& method,
                        const char* metric, const MetricAggregate& agg, bool suppressed = false) {
  out << family_name(sc.family) << ',' << error_name(sc.error_law) << ','
      << sigma_name(sc.sigma_kind) << ',' << propensity_name(sc.propensity) << ',' << sc.d0
      << ',' << sc.n << ',' << method << ',' << metric << ',';
  char buf[40];
  if (agg.defined) {
    std::snprintf(buf, sizeof(buf), "%.10g", agg.mean);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.10g", agg.mc_se);
    out << buf;
  } else {
    out << ',';
  }
  out << ',' << (suppressed ? "suppressed" : "") << '\n';
}

}  // namespace detail

/// Scenario grid for a named table of the studies:
///   table1/table2: Models I/II, constant propensity, all error laws and
///     both sigma kinds; table6/table7 are their non-constant variants.
///   table3/table8: interaction family over d0 in {5,10,15}, normal and
///     centered-gamma errors (constant / non-constant propensity).
inline std::vector<Scenario> table_scenarios(const std::string& table, const TableOptions& opt) {
  std::vector<Scenario> out;
  Scenario base;
  base.replications = opt.replications;
  base.validation_size = opt.validation_size;
  base.seed = opt.seed;

  auto push_study_one = [&](TruthFamily family, PropensityLaw prop) {
    for (SigmaKind sigma : {SigmaKind::homogeneous, SigmaKind::heterogeneous_x})
      for (ErrorLaw law : {ErrorLaw::normal, ErrorLaw::log_normal, ErrorLaw::cauchy})
        for (int n : opt.n_values) {
          Scenario sc = base;
          sc.family = family;
          sc.sigma_kind = sigma;
          sc.error_law = law;
          sc.propensity = prop;
          sc.n = n;
          out.push_back(sc);
        }
  };
  auto push_interaction = [&](PropensityLaw prop) {
    for (ErrorLaw law : {ErrorLaw::normal, ErrorLaw::gamma_centered})
      for (double d0 : {5.0, 10.0, 15.0})
        for (int n : opt.n_values) {
          Scenario sc = base;
          sc.family = TruthFamily::interaction;
          sc.sigma_kind = SigmaKind::treatment_interacted;
          sc.error_law = law;
          sc.propensity = prop;
          sc.d0 = d0;
          sc.n = n;
          out.push_back(sc);
        }
  };

  if (table == "table1")
    push_study_one(TruthFamily::model_I, PropensityLaw::constant_half);
  else if (table == "table2")
    push_study_one(TruthFamily::model_II, PropensityLaw::constant_half);
  else if (table == "table3")
    push_interaction(PropensityLaw::constant_half);
  else if (table == "table6")
    push_study_one(TruthFamily::model_I, PropensityLaw::expit_diff);
  else if (table == "table7")
    push_study_one(TruthFamily::model_II, PropensityLaw::expit_diff);
  else if (table == "table8")
    push_interaction(PropensityLaw::expit_diff);
  else
    throw schema_error("unknown table '" + table + "'");
  return out;
}

/// Runs every scenario of the named table and writes one long-format CSV:
/// {family, error, sigma, propensity, d0, n, method, metric, mean, mc_se,
/// note}. Values are stored unscaled (no presentation multipliers).
inline std::vector<TableRow> run_table(const std::string& table, const TableOptions& opt,
                                       std::ostream& csv) {
  const std::vector<Scenario> scenarios = table_scenarios(table, opt);
  const bool interaction = !scenarios.empty() && scenarios.front().family == TruthFamily::interaction;
  csv << "family,error,sigma,propensity,d0,n,method,metric,mean,mc_se,note\n";
  std::vector<TableRow> rows;
  for (const Scenario& sc : scenarios) {
    const std::vector<CellResult> cells = run_cell(sc, opt.methods, SolverConfig{}, opt.jobs);
    for (const CellResult& cell : cells) {
      if (!interaction) {
        detail::emit_metric(csv, sc, cell.method, "mse", cell.mse, cell.mse_suppressed);
        detail::emit_metric(csv, sc, cell.method, "pcd", cell.pcd);
        detail::emit_metric(csv, sc, cell.method, "delta_mu", cell.delta_mu);
        detail::emit_metric(csv, sc, cell.method, "delta_0.5", cell.delta_05);
      } else {
        detail::emit_metric(csv, sc, cell.method, "delta_mu", cell.delta_mu);
        detail::emit_metric(csv, sc, cell.method, "delta_0.5", cell.delta_05);
        detail::emit_metric(csv, sc, cell.method, "delta_0.25", cell.delta_025);
      }
      rows.push_back(TableRow{sc, cell});
    }
  }
  return rows;
}

}  // namespace ritr
