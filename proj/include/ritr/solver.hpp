#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ritr/errors.hpp"
#include "ritr/losses.hpp"
#include "ritr/stats.hpp"

namespace ritr {

struct SolverConfig {
  double param_tol = 1e-8;
  int max_outer = 50;
  int max_inner = 200;
  // The final stage pins asymmetric-pinball solutions to ~1e-8 of the exact
  // optimum; residual smoothing bias scales as 2*kappa*|0.5 - tau|.
  std::vector<double> kappa_schedule = {1.0, 1e-1, 1e-2, 1e-4, 1e-6, 1e-8};
  double ridge_floor = 1e-10;

  void validate() const {
    if (!(param_tol > 0.0) || !(ridge_floor > 0.0))
      throw schema_error("solver config: tolerances must be positive");
    if (max_outer < 1 || max_inner < 1)
      throw schema_error("solver config: iteration limits must be >= 1");
    if (kappa_schedule.empty()) throw schema_error("solver config: empty kappa schedule");
    for (std::size_t i = 0; i < kappa_schedule.size(); ++i) {
      if (!(kappa_schedule[i] > 0.0))
        throw schema_error("solver config: kappa values must be positive");
      if (i > 0 && !(kappa_schedule[i] < kappa_schedule[i - 1]))
        throw schema_error("solver config: kappa schedule must be strictly decreasing");
    }
  }
};

struct FitDiagnostics {
  bool converged = false;
  int outer_rounds = 0;
  /// Exact (unsmoothed) objective at the solution, original response scale.
  double final_objective = std::numeric_limits<double>::quiet_NaN();
  /// Max-norm gradient of the last smoothed surrogate (scale-normalized units).
  double final_grad_norm = std::numeric_limits<double>::quiet_NaN();
  /// Huber auto only: alpha on the original response scale.
  double resolved_alpha = std::numeric_limits<double>::quiet_NaN();
  /// Huber auto hit a zero residual scale and fell back to squared loss.
  bool huber_scale_degenerate = false;
};

struct MinimizeResult {
  Eigen::VectorXd theta;
  FitDiagnostics diagnostics;
};

/// Single-step automatic Huber threshold: 1.345 * MAD(residuals)/0.6745.
/// Returns 0 when the residual scale degenerates to zero.
inline double huber_alpha_from_residuals(const Eigen::Ref<const Eigen::VectorXd>& residuals) {
  if (residuals.size() < 2) throw schema_error("huber alpha: need at least 2 residuals");
  return 1.345 * mad(residuals) / 0.6745;
}

namespace detail {

constexpr double kArmijo = 1e-4;

/// Robust response scale used to normalize the annealing schedule.
inline double response_scale(const Eigen::Ref<const Eigen::VectorXd>& y) {
  double s = mad(y) / 0.6745;
  if (!(s > 0.0)) s = sample_sd(y);
  if (!(s > 0.0)) s = 1.0;
  return s;
}

inline void check_design(const Eigen::Ref<const Eigen::MatrixXd>& D,
                         const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (D.rows() != y.size()) throw schema_error("minimize: design and response sizes disagree");
  if (D.rows() < 1 || D.cols() < 1) throw schema_error("minimize: empty problem");
  if (!D.allFinite() || !y.allFinite())
    throw schema_error("minimize: non-finite entries in design or response");
}

/// Exact least squares via the normal equations with a ridge floor; rank
/// deficiency beyond the floor is an error.
inline Eigen::VectorXd solve_squared(const Eigen::Ref<const Eigen::MatrixXd>& D,
                                     const Eigen::Ref<const Eigen::VectorXd>& y,
                                     double ridge_floor) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(D);
  if (qr.rank() < D.cols())
    throw singular_design_error("design matrix is rank deficient (rank " +
                                std::to_string(qr.rank()) + " of " + std::to_string(D.cols()) +
                                " columns)");
  Eigen::MatrixXd A = D.transpose() * D;
  A.diagonal().array() += ridge_floor;
  return Eigen::LDLT<Eigen::MatrixXd>(A).solve(D.transpose() * y);
}

struct SmoothObjective {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::VectorXd hess_weights;  // per-row second derivatives
};

inline SmoothObjective eval_smooth(const Eigen::Ref<const Eigen::MatrixXd>& D,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const LossSpec& loss, double kappa,
                                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                                   bool with_derivatives) {
  const Eigen::Index n = D.rows();
  const Eigen::VectorXd r = y - D * theta;
  SmoothObjective out;
  Eigen::VectorXd d1;
  if (with_derivatives) {
    d1.resize(n);
    out.hess_weights.resize(n);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const SmoothedLoss s = smoothed_loss(loss, r[i], kappa);
    sum += s.value;
    if (with_derivatives) {
      d1[i] = s.d1;
      out.hess_weights[i] = s.d2;
    }
  }
  out.value = sum / static_cast<double>(n);
  if (with_derivatives) out.grad = -(D.transpose() * d1) / static_cast<double>(n);
  return out;
}

/// Damped Newton with a Levenberg ridge and Armijo backtracking on one
/// smoothing stage. Returns true when the parameter change fell below tol.
inline bool newton_stage(const Eigen::Ref<const Eigen::MatrixXd>& D,
                         const Eigen::Ref<const Eigen::VectorXd>& y, const LossSpec& loss,
                         double kappa, const SolverConfig& cfg, Eigen::VectorXd& theta,
                         double& grad_norm) {
  const Eigen::Index d = D.cols();
  const double n = static_cast<double>(D.rows());
  SmoothObjective cur = eval_smooth(D, y, loss, kappa, theta, true);
  if (!std::isfinite(cur.value)) throw divergence_error("objective is non-finite");
  bool converged = false;
  for (int it = 0; it < cfg.max_inner; ++it) {
    grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
    if (grad_norm < 1e-14 * (1.0 + std::abs(cur.value))) {
      converged = true;
      break;
    }
    Eigen::MatrixXd H =
        D.transpose() * cur.hess_weights.asDiagonal() * D / n;
    double lambda = std::max(cfg.ridge_floor, 1e-14 * H.trace() / static_cast<double>(d));
    bool accepted = false;
    Eigen::VectorXd theta_new;
    SmoothObjective next;
    while (lambda < 1e18) {
      Eigen::MatrixXd Hd = H;
      Hd.diagonal().array() += lambda;
      const Eigen::VectorXd step = Eigen::LDLT<Eigen::MatrixXd>(Hd).solve(-cur.grad);
      const double slope = cur.grad.dot(step);
      if (step.allFinite() && slope < 0.0) {
        double t = 1.0;
        while (t >= 1e-13) {
          theta_new = theta + t * step;
          next = eval_smooth(D, y, loss, kappa, theta_new, true);
          if (std::isfinite(next.value) && next.value <= cur.value + kArmijo * t * slope) {
            accepted = true;
            break;
          }
          t *= 0.5;
        }
      }
      if (accepted) break;
      lambda *= 10.0;
    }
    if (!accepted) {
      // No descent step exists within the damping budget: numerically
      // stationary for this stage.
      converged = true;
      break;
    }
    const double change = (theta_new - theta).lpNorm<Eigen::Infinity>();
    theta = std::move(theta_new);
    cur = std::move(next);
    if (!std::isfinite(cur.value)) throw divergence_error("objective is non-finite");
    if (change < cfg.param_tol) {
      grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
      converged = true;
      break;
    }
  }
  grad_norm = cur.grad.lpNorm<Eigen::Infinity>();
  return converged;
}

/// Loss with its scale parameter expressed on the normalized response scale.
inline LossSpec scaled_loss(const LossSpec& loss, double s) {
  LossSpec out = loss;
  if (loss.kind == LossKind::huber || loss.kind == LossKind::eps_insensitive)
    out.param = loss.param / s;
  return out;
}

inline double exact_objective(const Eigen::Ref<const Eigen::MatrixXd>& D,
                              const Eigen::Ref<const Eigen::VectorXd>& y, const LossSpec& loss,
                              const Eigen::Ref<const Eigen::VectorXd>& theta) {
  const Eigen::VectorXd r = y - D * theta;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) sum += loss_value(loss, r[i]);
  return sum / static_cast<double>(r.size());
}

/// Annealed smoothing pass over the kappa schedule for a fixed loss, on the
/// normalized scale. Huber is already C1, so only the final stage runs.
inline bool anneal(const Eigen::Ref<const Eigen::MatrixXd>& D,
                   const Eigen::Ref<const Eigen::VectorXd>& ys, const LossSpec& loss_s,
                   const SolverConfig& cfg, Eigen::VectorXd& theta, double& grad_norm,
                   int& stages) {
  std::vector<double> schedule = cfg.kappa_schedule;
  if (loss_s.kind == LossKind::huber) schedule = {cfg.kappa_schedule.back()};
  bool converged = false;
  for (double kappa : schedule) {
    converged = newton_stage(D, ys, loss_s, kappa, cfg, theta, grad_norm);
    ++stages;
  }
  return converged;
}

struct HuberAutoResult {
  Eigen::VectorXd theta;   // normalized scale
  double alpha = 0.0;      // normalized scale
  int rounds = 0;
  bool converged = false;
  bool degenerate = false;
  double grad_norm = 0.0;
};

/// Joint IRLS on (theta, alpha): refit with the Huber threshold re-resolved
/// from the current residual scale until both settle.
inline HuberAutoResult huber_auto_fit(const Eigen::Ref<const Eigen::MatrixXd>& D,
                                      const Eigen::Ref<const Eigen::VectorXd>& ys,
                                      const SolverConfig& cfg,
                                      const std::optional<Eigen::VectorXd>& init = std::nullopt) {
  HuberAutoResult out;
  out.theta = init ? *init : solve_squared(D, ys, cfg.ridge_floor);
  double alpha_prev = std::numeric_limits<double>::infinity();
  for (int round = 0; round < cfg.max_outer; ++round) {
    ++out.rounds;
    const Eigen::VectorXd r = ys - D * out.theta;
    const double alpha = huber_alpha_from_residuals(r);
    // ys is on unit robust scale; a spread this small means the residuals
    // are identical up to solver noise.
    if (!(alpha > 1e-9)) {
      // Zero residual scale: squared loss is the only sensible objective.
      out.degenerate = true;
      out.theta = solve_squared(D, ys, cfg.ridge_floor);
      out.alpha = 0.0;
      out.converged = true;
      return out;
    }
    Eigen::VectorXd theta_new = out.theta;
    int stages = 0;
    const bool stage_ok =
        anneal(D, ys, LossSpec::huber(alpha), cfg, theta_new, out.grad_norm, stages);
    const double change = (theta_new - out.theta).lpNorm<Eigen::Infinity>();
    out.theta = std::move(theta_new);
    out.alpha = alpha;
    if (std::abs(alpha - alpha_prev) <= 1e-8 * std::max(1.0, alpha) &&
        change <= 10.0 * cfg.param_tol) {
      out.converged = stage_ok;
      return out;
    }
    alpha_prev = alpha;
  }
  return out;
}

}  // namespace detail

/// Minimizes (1/n) sum_i M(y_i - D_i . theta) for the given loss.
///
/// Squared loss solves the normal equations directly. Nonsmooth losses run
/// damped Newton over a decreasing smoothing schedule, warm-started from the
/// squared solution (or `init`). The response is normalized by a robust
/// scale internally so the schedule is scale-free; coefficients come back on
/// the original scale and the whole procedure is exactly scale-equivariant.
inline MinimizeResult minimize(const Eigen::Ref<const Eigen::MatrixXd>& D,
                               const Eigen::Ref<const Eigen::VectorXd>& y, const LossSpec& loss,
                               const SolverConfig& cfg = {},
                               const std::optional<Eigen::VectorXd>& init = std::nullopt) {
  cfg.validate();
  loss.validate();
  detail::check_design(D, y);
  if (init && init->size() != D.cols())
    throw schema_error("minimize: init has wrong dimension");

  MinimizeResult res;
  if (loss.kind == LossKind::squared) {
    res.theta = detail::solve_squared(D, y, cfg.ridge_floor);
    res.diagnostics.converged = true;
    res.diagnostics.outer_rounds = 1;
    res.diagnostics.final_objective = detail::exact_objective(D, y, loss, res.theta);
    const Eigen::VectorXd r = y - D * res.theta;
    res.diagnostics.final_grad_norm =
        ((D.transpose() * r) / static_cast<double>(D.rows())).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(res.diagnostics.final_objective))
      throw divergence_error("objective is non-finite");
    return res;
  }

  const double s = detail::response_scale(y);
  const Eigen::VectorXd ys = y / s;

  if (loss.kind == LossKind::huber && loss.auto_param) {
    const std::optional<Eigen::VectorXd> init_scaled =
        init ? std::optional<Eigen::VectorXd>(*init / s) : std::nullopt;
    const detail::HuberAutoResult h = detail::huber_auto_fit(D, ys, cfg, init_scaled);
    res.theta = h.theta * s;
    res.diagnostics.converged = h.converged;
    res.diagnostics.outer_rounds = h.rounds;
    res.diagnostics.final_grad_norm = h.grad_norm;
    res.diagnostics.resolved_alpha = h.alpha * s;
    res.diagnostics.huber_scale_degenerate = h.degenerate;
    res.diagnostics.final_objective = detail::exact_objective(
        D, y, h.degenerate ? LossSpec::squared() : LossSpec::huber(h.alpha * s), res.theta);
    if (!std::isfinite(res.diagnostics.final_objective))
      throw divergence_error("objective is non-finite");
    return res;
  }

  const LossSpec loss_s = detail::scaled_loss(loss, s);
  Eigen::VectorXd theta =
      init ? Eigen::VectorXd(*init / s) : detail::solve_squared(D, ys, cfg.ridge_floor);
  double grad_norm = 0.0;
  int stages = 0;
  const bool converged = detail::anneal(D, ys, loss_s, cfg, theta, grad_norm, stages);
  res.theta = theta * s;
  res.diagnostics.converged = converged;
  res.diagnostics.outer_rounds = stages;
  res.diagnostics.final_grad_norm = grad_norm;
  res.diagnostics.final_objective = detail::exact_objective(D, y, loss, res.theta);
  if (!std::isfinite(res.diagnostics.final_objective))
    throw divergence_error("objective is non-finite");
  return res;
}

/// Automatic Huber threshold jointly resolved with the coefficients,
/// reported on the original response scale. Returns 0 when the residual
/// scale degenerates (the fit falls back to squared loss).
inline double resolve_huber_alpha(const Eigen::Ref<const Eigen::MatrixXd>& D,
                                  const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const SolverConfig& cfg = {}) {
  cfg.validate();
  detail::check_design(D, y);
  if (y.size() < 2) throw schema_error("resolve_huber_alpha: need at least 2 observations");
  const double s = detail::response_scale(y);
  return detail::huber_auto_fit(D, y / s, cfg).alpha * s;
}

}  // namespace ritr
