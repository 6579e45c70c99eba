#pragma once

#include <Eigen/Core>
#include <cmath>

#include "ritr/policy.hpp"

namespace ritr {

/// Point estimate with an influence-function standard error and the 95%
/// normal-approximation interval (half-width 1.96 * se).
struct ValueEstimate {
  double value = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

namespace detail {

inline ValueEstimate from_influence(double value, const Eigen::VectorXd& influence) {
  ValueEstimate out;
  out.value = value;
  out.se = sample_sd(influence) / std::sqrt(static_cast<double>(influence.size()));
  out.ci_low = value - 1.96 * out.se;
  out.ci_high = value + 1.96 * out.se;
  return out;
}

}  // namespace detail

/// Inverse-probability-weighted value of a rule in the Hajek (ratio) form:
/// sum I{A=g(X)} Y / p(A|X) over sum I{A=g(X)} / p(A|X). The standard error
/// comes from the delta-method influence (I{A=g}/p)(Y - V)/mean(I{A=g}/p).
inline ValueEstimate ipwe(const Dataset& data, const TreatmentRule& rule) {
  data.validate();
  if (rule.n_treatments() != data.n_treatments)
    throw schema_error("ipwe: rule and data disagree on treatment count");
  const Eigen::Index n = data.n();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rule.decide(data.x.row(i)) != data.a[i]) continue;
    w[i] = 1.0 / data.received_propensity(i);
    num += w[i] * data.y[i];
    den += w[i];
  }
  if (den == 0.0)
    throw undefined_estimate_error("ipwe: no observation received the rule's treatment");
  const double value = num / den;
  const double mean_w = den / static_cast<double>(n);
  Eigen::VectorXd influence(n);
  for (Eigen::Index i = 0; i < n; ++i) influence[i] = w[i] * (data.y[i] - value) / mean_w;
  return detail::from_influence(value, influence);
}

/// Augmented IPW value: model-based term (1/n) sum E-hat[Y|X, g(X)] plus the
/// weighted residual correction. Standard error from the per-sample
/// influence terms, with the fitted nuisance treated as fixed.
inline ValueEstimate aipwe(const Dataset& data, const FittedModel& model,
                           const TreatmentRule& rule) {
  data.validate();
  model.spec.validate();
  if (rule.n_treatments() != data.n_treatments ||
      model.spec.n_treatments != data.n_treatments)
    throw schema_error("aipwe: treatment count mismatch");
  if (model.spec.covariate_dim() != data.p())
    throw schema_error("aipwe: covariate dimension mismatch");
  const Eigen::Index n = data.n();
  Eigen::VectorXd influence(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd x = data.x.row(i);
    const int g = rule.decide(x);
    double term = model.conditional_mean(x, g, data.prop.row(i));
    if (g == data.a[i]) {
      const double fitted = model.conditional_mean(x, data.a[i], data.prop.row(i));
      term += (data.y[i] - fitted) / data.received_propensity(i);
    }
    influence[i] = term;
  }
  return detail::from_influence(influence.mean(), influence);
}

}  // namespace ritr
