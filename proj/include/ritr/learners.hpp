#pragma once

#include <Eigen/Core>
#include <vector>

#include "ritr/dataset.hpp"
#include "ritr/solver.hpp"

namespace ritr {

/// How the treatment enters the regression design: centered (A - pi) for
/// the contrast-plus-baseline model, or raw A for the conditional-mean
/// Q-model.
enum class DesignKind { treatment_centered, raw_treatment };

/// Result of an estimation procedure: contrast coefficients (one vector per
/// non-reference arm), baseline coefficients, solver diagnostics and the fit
/// residuals. Immutable by convention; safe to share.
struct FittedModel {
  ModelSpec spec;
  LossSpec loss;  // param carries the resolved alpha after an auto fit
  DesignKind design_kind = DesignKind::treatment_centered;
  std::vector<Eigen::VectorXd> beta;
  Eigen::VectorXd gamma;
  FitDiagnostics diagnostics;
  Eigen::VectorXd residuals;

  Eigen::VectorXd theta() const {
    Eigen::VectorXd out(spec.design_dim());
    const Eigen::Index cd = spec.contrast_map.dim();
    for (std::size_t k = 0; k < beta.size(); ++k)
      out.segment(static_cast<Eigen::Index>(k) * cd, cd) = beta[k];
    out.tail(gamma.size()) = gamma;
    return out;
  }

  Eigen::VectorXd stacked_beta() const {
    Eigen::VectorXd out((spec.n_treatments - 1) * spec.contrast_map.dim());
    const Eigen::Index cd = spec.contrast_map.dim();
    for (std::size_t k = 0; k < beta.size(); ++k)
      out.segment(static_cast<Eigen::Index>(k) * cd, cd) = beta[k];
    return out;
  }

  /// Contrast of arm k (vs the reference arm 0) at a covariate row.
  double contrast(const Eigen::Ref<const Eigen::VectorXd>& x_row, int arm = 1) const {
    if (arm < 1 || arm >= spec.n_treatments)
      throw schema_error("contrast: arm index out of range");
    return beta[static_cast<std::size_t>(arm - 1)].dot(spec.contrast_map.evaluate(x_row));
  }

  Eigen::VectorXd contrasts(const Eigen::Ref<const Eigen::VectorXd>& x_row) const {
    const Eigen::VectorXd f = spec.contrast_map.evaluate(x_row);
    Eigen::VectorXd out(static_cast<Eigen::Index>(beta.size()));
    for (std::size_t k = 0; k < beta.size(); ++k)
      out[static_cast<Eigen::Index>(k)] = beta[k].dot(f);
    return out;
  }

  /// Fitted E[Y | x, a] under this model.
  double conditional_mean(const Eigen::Ref<const Eigen::VectorXd>& x_row, int a,
                          const Eigen::Ref<const Eigen::VectorXd>& prop_row) const {
    double out = gamma.dot(spec.baseline_map.evaluate(x_row));
    const Eigen::VectorXd f = spec.contrast_map.evaluate(x_row);
    for (int k = 1; k < spec.n_treatments; ++k) {
      const double coding = design_kind == DesignKind::treatment_centered
                                ? (a == k ? 1.0 : 0.0) - prop_row[k - 1]
                                : (a == k ? 1.0 : 0.0);
      out += coding * beta[static_cast<std::size_t>(k - 1)].dot(f);
    }
    return out;
  }
};

namespace detail {

inline FittedModel assemble_model(const ModelSpec& spec, const LossSpec& loss,
                                  DesignKind design_kind, const Eigen::MatrixXd& D,
                                  const Eigen::VectorXd& y, MinimizeResult&& res) {
  FittedModel m;
  m.spec = spec;
  m.loss = loss;
  m.design_kind = design_kind;
  if (loss.kind == LossKind::huber && loss.auto_param) {
    m.loss.param = res.diagnostics.resolved_alpha;
    if (res.diagnostics.huber_scale_degenerate) m.loss = LossSpec::squared();
  }
  const Eigen::Index cd = spec.contrast_map.dim();
  for (int k = 1; k < spec.n_treatments; ++k)
    m.beta.push_back(res.theta.segment(static_cast<Eigen::Index>(k - 1) * cd, cd));
  m.gamma = res.theta.tail(spec.baseline_map.dim());
  m.diagnostics = res.diagnostics;
  m.residuals = y - D * res.theta;
  return m;
}

}  // namespace detail

/// Robust-regression fit of the contrast-plus-baseline model with the given
/// loss; the squared loss reproduces the least-squares A-learning estimator.
inline FittedModel fit_rr(const Dataset& data, const ModelSpec& spec, const LossSpec& loss,
                          const SolverConfig& cfg = {}) {
  data.validate();
  spec.validate();
  loss.validate();
  Eigen::MatrixXd D = design_matrix(spec, data);
  MinimizeResult res = minimize(D, data.y, loss, cfg);
  return detail::assemble_model(spec, loss, DesignKind::treatment_centered, D, data.y,
                                std::move(res));
}

/// Q-learning: least squares on h(X; gamma) + A * C(X; beta). Binary
/// treatments only.
inline FittedModel fit_q_learning(const Dataset& data, const ModelSpec& spec,
                                  const SolverConfig& cfg = {}) {
  data.validate();
  spec.validate();
  if (data.n_treatments != 2 || spec.n_treatments != 2)
    throw schema_error("fit_q_learning: binary treatment only");
  if (data.p() != spec.covariate_dim())
    throw schema_error("fit_q_learning: covariate dimension mismatch");
  const Eigen::Index cd = spec.contrast_map.dim();
  const Eigen::Index bd = spec.baseline_map.dim();
  Eigen::MatrixXd D(data.n(), cd + bd);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const Eigen::VectorXd cf = spec.contrast_map.evaluate(data.x.row(i));
    const Eigen::VectorXd bf = spec.baseline_map.evaluate(data.x.row(i));
    D.row(i).head(cd) = (data.a[i] == 1 ? 1.0 : 0.0) * cf.transpose();
    D.row(i).tail(bd) = bf.transpose();
  }
  MinimizeResult res = minimize(D, data.y, LossSpec::squared(), cfg);
  return detail::assemble_model(spec, LossSpec::squared(), DesignKind::raw_treatment, D, data.y,
                                std::move(res));
}

/// Contrast C(x; beta-hat) of arm 1; use predict_contrasts for K > 2.
inline double predict_contrast(const FittedModel& model,
                               const Eigen::Ref<const Eigen::VectorXd>& x_row) {
  return model.contrast(x_row, 1);
}

inline Eigen::VectorXd predict_contrasts(const FittedModel& model,
                                         const Eigen::Ref<const Eigen::VectorXd>& x_row) {
  return model.contrasts(x_row);
}

}  // namespace ritr
