#pragma once

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "ritr/learners.hpp"
#include "ritr/stats.hpp"

namespace ritr {

/// Decision rule induced by contrast coefficients: treat with the arm of
/// largest positive contrast, arm 0 when none is positive. Binary rules
/// reduce to I{C(x; beta) > 0} with the strict inequality mapping C = 0 to
/// arm 0.
struct TreatmentRule {
  FeatureMap contrast_map;
  std::vector<Eigen::VectorXd> beta;

  int n_treatments() const { return static_cast<int>(beta.size()) + 1; }

  double contrast(const Eigen::Ref<const Eigen::VectorXd>& x_row, int arm = 1) const {
    if (arm < 1 || arm >= n_treatments()) throw schema_error("rule contrast: arm out of range");
    return beta[static_cast<std::size_t>(arm - 1)].dot(contrast_map.evaluate(x_row));
  }

  /// Smallest-index argmax over {0, C_1, ..., C_{K-1}}.
  int decide(const Eigen::Ref<const Eigen::VectorXd>& x_row) const {
    const Eigen::VectorXd f = contrast_map.evaluate(x_row);
    int best = 0;
    double best_value = 0.0;
    for (std::size_t k = 0; k < beta.size(); ++k) {
      const double c = beta[k].dot(f);
      if (c > best_value) {
        best_value = c;
        best = static_cast<int>(k) + 1;
      }
    }
    return best;
  }

  static TreatmentRule from_model(const FittedModel& model) {
    return TreatmentRule{model.spec.contrast_map, model.beta};
  }
};

inline int decide(const TreatmentRule& rule, const Eigen::Ref<const Eigen::VectorXd>& x_row) {
  return rule.decide(x_row);
}

enum class ErrorLaw { normal, log_normal, cauchy, gamma_centered };
enum class SigmaKind { homogeneous, heterogeneous_x, treatment_interacted };
enum class PropensityLaw { constant_half, expit_diff };
enum class TruthFamily { model_I, model_II, interaction };

/// Known generative truth for the synthetic studies: a declarative family
/// tag plus its coefficients. Every error law exposes an analytic mean
/// (where defined) and quantile function.
///
/// model_I:     Y = 1 + (X1-X2)(X1+X3) + (A-pi) b0.xt + sigma(X) e,  p = 3
/// model_II:    Y = g0.xt + (A-pi) b0.xt + sigma(X) e,               p = 3
/// interaction: Y = 1 + 0.5 sin(pi(X1-X2)) + 0.25 (1+X1+2X2)^2
///                  + (A-pi) b0.xt + (1 + A d0 X1^2) e,              p = 2
///
/// The log-normal law is mean-centered, exp(Z) - exp(1/2); centering is
/// invisible under x-independent sigma (the baseline absorbs it) but it
/// changes the heterogeneous-sigma cells, where the centered version
/// matches the reference results.
struct TruthModel {
  TruthFamily family = TruthFamily::model_II;
  Eigen::VectorXd beta0;
  Eigen::VectorXd gamma0;
  SigmaKind sigma_kind = SigmaKind::homogeneous;
  double d0 = 0.0;
  ErrorLaw error_law = ErrorLaw::normal;
  PropensityLaw propensity_law = PropensityLaw::constant_half;

  int covariate_dim() const { return family == TruthFamily::interaction ? 2 : 3; }

  double phi0(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    switch (family) {
      case TruthFamily::model_I:
        return 1.0 + (x[0] - x[1]) * (x[0] + x[2]);
      case TruthFamily::model_II: {
        double v = gamma0[0];
        for (Eigen::Index j = 0; j < x.size(); ++j) v += gamma0[j + 1] * x[j];
        return v;
      }
      case TruthFamily::interaction: {
        const double lin = 1.0 + x[0] + 2.0 * x[1];
        return 1.0 + 0.5 * std::sin(M_PI * (x[0] - x[1])) + 0.25 * lin * lin;
      }
    }
    return 0.0;
  }

  double contrast0(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    double v = beta0[0];
    for (Eigen::Index j = 0; j < x.size(); ++j) v += beta0[j + 1] * x[j];
    return v;
  }

  double sigma(const Eigen::Ref<const Eigen::VectorXd>& x, int a) const {
    switch (sigma_kind) {
      case SigmaKind::homogeneous:
        return 1.0;
      case SigmaKind::heterogeneous_x: {
        const double diff = x[0] - x[1];
        return 0.5 + diff * diff;
      }
      case SigmaKind::treatment_interacted:
        return 1.0 + (a == 1 ? d0 * x[0] * x[0] : 0.0);
    }
    return 1.0;
  }

  double propensity(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (propensity_law == PropensityLaw::constant_half) return 0.5;
    return 1.0 / (1.0 + std::exp(-(x[0] - x[1])));
  }

  bool error_mean_defined() const { return error_law != ErrorLaw::cauchy; }

  double error_mean() const {
    switch (error_law) {
      case ErrorLaw::normal:
      case ErrorLaw::gamma_centered:
      case ErrorLaw::log_normal:
        return 0.0;
      case ErrorLaw::cauchy:
        throw undefined_value_error("mean of a Cauchy error law is undefined");
    }
    return 0.0;
  }

  double error_quantile(double tau) const {
    if (!(tau > 0.0 && tau < 1.0)) throw schema_error("error_quantile: tau outside (0,1)");
    switch (error_law) {
      case ErrorLaw::normal:
        return normal_quantile(tau);
      case ErrorLaw::log_normal:
        return std::exp(normal_quantile(tau)) - std::exp(0.5);
      case ErrorLaw::cauchy:
        return std::tan(M_PI * (tau - 0.5));
      case ErrorLaw::gamma_centered:
        return -std::log(1.0 - tau) - 1.0;
    }
    return 0.0;
  }

  /// E[Y | x, a]; undefined for infinite-mean error laws.
  double q_mean(const Eigen::Ref<const Eigen::VectorXd>& x, int a) const {
    return phi0(x) + ((a == 1 ? 1.0 : 0.0) - propensity(x)) * contrast0(x) +
           sigma(x, a) * error_mean();
  }

  /// tau-th conditional quantile of Y given (x, a).
  double q_quantile(const Eigen::Ref<const Eigen::VectorXd>& x, int a, double tau) const {
    return phi0(x) + ((a == 1 ? 1.0 : 0.0) - propensity(x)) * contrast0(x) +
           sigma(x, a) * error_quantile(tau);
  }

  int optimal_decision_mean(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return contrast0(x) + (sigma(x, 1) - sigma(x, 0)) * error_mean() > 0.0 ? 1 : 0;
  }

  int optimal_decision_quantile(const Eigen::Ref<const Eigen::VectorXd>& x, double tau) const {
    return contrast0(x) + (sigma(x, 1) - sigma(x, 0)) * error_quantile(tau) > 0.0 ? 1 : 0;
  }
};

/// Percentage of validation points where the rule agrees with the true
/// optimal decision I{C0(x) > 0}; 100 * (1 - mean |disagreement|).
inline double pcd(const TreatmentRule& rule, const TruthModel& truth,
                  const Eigen::Ref<const Eigen::MatrixXd>& validation_x) {
  if (validation_x.rows() < 1) throw schema_error("pcd: empty validation set");
  Eigen::Index disagreements = 0;
  for (Eigen::Index i = 0; i < validation_x.rows(); ++i) {
    const Eigen::VectorXd x = validation_x.row(i);
    const int truth_decision = truth.contrast0(x) > 0.0 ? 1 : 0;
    if (rule.decide(x) != truth_decision) ++disagreements;
  }
  return 100.0 *
         (1.0 - static_cast<double>(disagreements) / static_cast<double>(validation_x.rows()));
}

namespace detail {

template <typename DecideFn>
double value_mean_of(const TruthModel& truth, const Eigen::Ref<const Eigen::MatrixXd>& vx,
                     DecideFn&& decide_fn) {
  if (!truth.error_mean_defined())
    throw undefined_value_error("mean value is undefined under an infinite-mean error law");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < vx.rows(); ++i) {
    const Eigen::VectorXd x = vx.row(i);
    sum += truth.q_mean(x, decide_fn(x));
  }
  return sum / static_cast<double>(vx.rows());
}

template <typename DecideFn>
double value_quantile_of(const TruthModel& truth, const Eigen::Ref<const Eigen::MatrixXd>& vx,
                         double tau, DecideFn&& decide_fn) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < vx.rows(); ++i) {
    const Eigen::VectorXd x = vx.row(i);
    sum += truth.q_quantile(x, decide_fn(x), tau);
  }
  return sum / static_cast<double>(vx.rows());
}

}  // namespace detail

/// Mean-outcome value of the rule, averaged over the validation covariates.
inline double value_mean(const TreatmentRule& rule, const TruthModel& truth,
                         const Eigen::Ref<const Eigen::MatrixXd>& validation_x) {
  return detail::value_mean_of(truth, validation_x,
                               [&](const Eigen::VectorXd& x) { return rule.decide(x); });
}

/// Quantile-outcome value of the rule at level tau.
inline double value_quantile(const TreatmentRule& rule, const TruthModel& truth,
                             const Eigen::Ref<const Eigen::MatrixXd>& validation_x, double tau) {
  return detail::value_quantile_of(truth, validation_x, tau,
                                   [&](const Eigen::VectorXd& x) { return rule.decide(x); });
}

/// Value gaps against the per-value-function optimal rule: each gap is the
/// optimum's value minus the rule's value, so all entries are >= 0 up to
/// validation-set reuse. delta_mu is absent under infinite-mean laws.
struct DeltaMetrics {
  std::optional<double> delta_mu;
  std::vector<std::pair<double, double>> delta_tau;  // (tau, gap)

  double at(double tau) const {
    for (const auto& [t, v] : delta_tau)
      if (t == tau) return v;
    throw schema_error("delta_metrics: tau not computed");
  }
};

inline DeltaMetrics delta_metrics(const TreatmentRule& rule, const TruthModel& truth,
                                  const Eigen::Ref<const Eigen::MatrixXd>& validation_x,
                                  const std::vector<double>& tau_list) {
  DeltaMetrics out;
  if (truth.error_mean_defined()) {
    const double opt = detail::value_mean_of(
        truth, validation_x,
        [&](const Eigen::VectorXd& x) { return truth.optimal_decision_mean(x); });
    out.delta_mu = opt - value_mean(rule, truth, validation_x);
  }
  for (double tau : tau_list) {
    const double opt = detail::value_quantile_of(
        truth, validation_x, tau,
        [&](const Eigen::VectorXd& x) { return truth.optimal_decision_quantile(x, tau); });
    out.delta_tau.emplace_back(tau, opt - value_quantile(rule, truth, validation_x, tau));
  }
  return out;
}

}  // namespace ritr
