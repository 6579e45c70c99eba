#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "ritr/errors.hpp"
#include "ritr/stats.hpp"

namespace ritr {

enum class LossKind { squared, pinball, huber, eps_insensitive };

/// Tagged choice of regression loss. `param` holds tau for pinball, alpha
/// for Huber and epsilon for the insensitive loss. Huber supports an
/// automatic alpha (`auto_param`), resolved by the solver from a robust
/// residual scale.
///
/// The squared loss is normalized as 0.5*x^2 so its derivative is x; callers
/// comparing against a plain-square objective must rescale reported values
/// by 2.
struct LossSpec {
  LossKind kind = LossKind::squared;
  double param = 0.0;
  bool auto_param = false;

  static LossSpec squared() { return {LossKind::squared, 0.0, false}; }
  static LossSpec pinball(double tau) { return {LossKind::pinball, tau, false}; }
  static LossSpec huber(double alpha) { return {LossKind::huber, alpha, false}; }
  static LossSpec huber_auto() { return {LossKind::huber, 0.0, true}; }
  static LossSpec eps_insensitive(double eps) { return {LossKind::eps_insensitive, eps, false}; }

  void validate() const {
    switch (kind) {
      case LossKind::squared:
        break;
      case LossKind::pinball:
        if (!(param > 0.0 && param < 1.0)) throw schema_error("pinball tau must lie in (0,1)");
        break;
      case LossKind::huber:
        if (!auto_param && !(param > 0.0)) throw schema_error("huber alpha must be positive");
        break;
      case LossKind::eps_insensitive:
        if (!(param > 0.0)) throw schema_error("eps-insensitive width must be positive");
        break;
    }
  }

  std::string name() const {
    switch (kind) {
      case LossKind::squared: return "squared";
      case LossKind::pinball: return "pinball";
      case LossKind::huber: return "huber";
      case LossKind::eps_insensitive: return "eps_insensitive";
    }
    return "?";
  }
};

inline double pinball_loss(double tau, double x) {
  return x >= 0.0 ? tau * x : (tau - 1.0) * x;
}

inline double loss_value(const LossSpec& spec, double r) {
  switch (spec.kind) {
    case LossKind::squared:
      return 0.5 * r * r;
    case LossKind::pinball:
      return pinball_loss(spec.param, r);
    case LossKind::huber: {
      const double a = spec.param;
      const double ar = std::abs(r);
      return ar < a ? 0.5 * r * r : a * ar - 0.5 * a * a;
    }
    case LossKind::eps_insensitive:
      return std::max(0.0, std::abs(r) - spec.param);
  }
  return 0.0;
}

/// One member of the subdifferential at r. Kink conventions: pinball at 0
/// returns tau - 0.5, the eps-insensitive loss returns 0 at |r| = eps.
inline double loss_subgradient(const LossSpec& spec, double r) {
  switch (spec.kind) {
    case LossKind::squared:
      return r;
    case LossKind::pinball: {
      const double tau = spec.param;
      if (r > 0.0) return tau;
      if (r < 0.0) return tau - 1.0;
      return tau - 0.5;
    }
    case LossKind::huber: {
      const double a = spec.param;
      if (r > a) return a;
      if (r < -a) return -a;
      return r;
    }
    case LossKind::eps_insensitive: {
      const double e = spec.param;
      if (r > e) return 1.0;
      if (r < -e) return -1.0;
      return 0.0;
    }
  }
  return 0.0;
}

struct SmoothedLoss {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

/// Twice-differentiable convex surrogate: quadratic patches of half-width
/// at most kappa around each kink, coinciding with the exact loss at
/// distance >= kappa from every kink and deviating by at most kappa/2
/// anywhere. Returns (value, first, second derivative).
inline SmoothedLoss smoothed_loss(const LossSpec& spec, double r, double kappa) {
  if (!(kappa > 0.0)) throw schema_error("smoothed_loss: kappa must be positive");
  SmoothedLoss out;
  switch (spec.kind) {
    case LossKind::squared:
      out.value = 0.5 * r * r;
      out.d1 = r;
      out.d2 = 1.0;
      return out;
    case LossKind::pinball: {
      const double tau = spec.param;
      if (r >= kappa) {
        out.value = tau * r;
        out.d1 = tau;
      } else if (r <= -kappa) {
        out.value = (tau - 1.0) * r;
        out.d1 = tau - 1.0;
      } else {
        out.value = r * r / (4.0 * kappa) + (tau - 0.5) * r + 0.25 * kappa;
        out.d1 = r / (2.0 * kappa) + (tau - 0.5);
        out.d2 = 1.0 / (2.0 * kappa);
      }
      return out;
    }
    case LossKind::huber: {
      // Already C1 with matching value and slope at |r| = alpha; the exact
      // loss is its own surrogate. The curvature jump at the boundary is of
      // the same kind as the other surrogates' patch edges.
      const double a = spec.param;
      const double ar = std::abs(r);
      if (ar <= a) {
        out.value = 0.5 * r * r;
        out.d1 = r;
        out.d2 = 1.0;
      } else {
        out.value = a * ar - 0.5 * a * a;
        out.d1 = r < 0.0 ? -a : a;
      }
      return out;
    }
    case LossKind::eps_insensitive: {
      const double e = spec.param;
      const double k = std::min(kappa, e);
      const double ar = std::abs(r);
      const double sg = r < 0.0 ? -1.0 : 1.0;
      if (ar <= e - k) {
        // flat core
      } else if (ar < e + k) {
        const double t = ar - (e - k);
        out.value = t * t / (4.0 * k);
        out.d1 = sg * t / (2.0 * k);
        out.d2 = 1.0 / (2.0 * k);
      } else {
        out.value = ar - e;
        out.d1 = sg;
      }
      return out;
    }
  }
  return out;
}

/// Closed-form decomposition of rho_tau(x - y) - rho_tau(x), valid for all
/// tau in (0,1). Useful as an exact identity for shift arguments.
inline double pinball_shift_decomposition(double tau, double x, double y) {
  double d = x >= 0.0 ? -tau * y : (1.0 - tau) * y;
  if (x >= 0.0 && y > x) d += y - x;
  if (x < 0.0 && y < x) d += x - y;
  return d;
}

/// Data-driven default width for the eps-insensitive loss: 0.1 * MAD(y).
/// A convenience only; no published tuning rule backs it.
inline double default_eps_insensitive_width(const Eigen::Ref<const Eigen::VectorXd>& y) {
  const double m = mad(y);
  if (!(m > 0.0)) throw schema_error("default_eps_insensitive_width: zero spread in y");
  return 0.1 * m;
}

}  // namespace ritr
