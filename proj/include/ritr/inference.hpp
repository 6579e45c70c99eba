#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "ritr/learners.hpp"
#include "ritr/parallel.hpp"
#include "ritr/rng.hpp"

namespace ritr {

enum class BootstrapScheme { pairs, residual };

/// Bootstrap distribution of the contrast coefficients: per-coordinate
/// standard errors, normal-approximation p-values for the original
/// estimates, and the raw replicate matrix (B x dim(beta)).
struct BootstrapResult {
  int B = 0;
  BootstrapScheme scheme = BootstrapScheme::pairs;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  Eigen::VectorXd p_values;
  Eigen::MatrixXd replicates;
};

namespace detail {

inline Dataset resample_pairs(const Dataset& data, RandomStream& rng) {
  const Eigen::Index n = data.n();
  Dataset out;
  out.n_treatments = data.n_treatments;
  out.covariate_names = data.covariate_names;
  out.y.resize(n);
  out.x.resize(n, data.p());
  out.a.resize(n);
  out.prop.resize(n, data.prop.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform01() * static_cast<double>(n));
    const Eigen::Index src = std::min(j, n - 1);
    out.y[i] = data.y[src];
    out.x.row(i) = data.x.row(src);
    out.a[i] = data.a[src];
    out.prop.row(i) = data.prop.row(src);
  }
  return out;
}

inline Dataset resample_residuals(const Dataset& data, const Eigen::VectorXd& fitted,
                                  const Eigen::VectorXd& residuals, RandomStream& rng) {
  Dataset out = data;
  const Eigen::Index n = data.n();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = static_cast<Eigen::Index>(rng.uniform01() * static_cast<double>(n));
    out.y[i] = fitted[i] + residuals[std::min(j, n - 1)];
  }
  return out;
}

}  // namespace detail

/// Nonparametric bootstrap of the contrast coefficients: B refits on row
/// resamples (pairs by default, residual resampling behind the scheme
/// flag). Deterministic given the seed; replicate b draws from a stream
/// derived from (seed, b), so results do not depend on `jobs`. A replicate
/// whose refit fails is retried on a fresh resample up to 10 times.
inline BootstrapResult bootstrap(const Dataset& data, const ModelSpec& spec, const LossSpec& loss,
                                 const SolverConfig& cfg, int B, std::uint64_t seed,
                                 BootstrapScheme scheme = BootstrapScheme::pairs, int jobs = 1) {
  if (B < 2) throw schema_error("bootstrap: B must be at least 2");
  const FittedModel base = fit_rr(data, spec, loss, cfg);
  const Eigen::VectorXd fitted = data.y - base.residuals;

  BootstrapResult out;
  out.B = B;
  out.scheme = scheme;
  out.estimate = base.stacked_beta();
  const Eigen::Index d = out.estimate.size();
  out.replicates.resize(B, d);

  parallel_for_index(B, jobs, [&](int b) {
    RandomStream rng = RandomStream::derive(seed, static_cast<std::uint64_t>(b), 0xB001u);
    for (int attempt = 0;; ++attempt) {
      try {
        const Dataset resampled = scheme == BootstrapScheme::pairs
                                      ? detail::resample_pairs(data, rng)
                                      : detail::resample_residuals(data, fitted, base.residuals, rng);
        out.replicates.row(b) = fit_rr(resampled, spec, loss, cfg).stacked_beta().transpose();
        return;
      } catch (const schema_error&) {
        throw;
      } catch (...) {
        if (attempt >= 9) throw;
      }
    }
  });

  out.se.resize(d);
  out.p_values.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    out.se[j] = sample_sd(out.replicates.col(j));
    if (out.se[j] > 0.0)
      out.p_values[j] = 2.0 * normal_cdf(-std::abs(out.estimate[j]) / out.se[j]);
    else
      out.p_values[j] = out.estimate[j] == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

/// Plug-in sandwich pieces for the pinball contrast coefficients (binary
/// treatment, linear maps): J11 from a Gaussian-kernel density of the
/// residuals at zero, Sigma11 from the score outer products, the implied
/// covariance of beta-hat, and the analytic (tau^2 + |1-2tau|) bound matrix.
struct AsymptoticCovariance {
  Eigen::MatrixXd j11;
  Eigen::MatrixXd sigma11;
  Eigen::MatrixXd covariance;  // J11^-1 Sigma11 J11^-1 / n
  Eigen::MatrixXd bound;       // (tau^2 + |1-2tau|) * mean pi(1-pi) xt xt'
  double bandwidth = 0.0;
};

inline AsymptoticCovariance asymptotic_covariance_pinball(const Dataset& data,
                                                          const FittedModel& model, double tau,
                                                          double bandwidth = 0.0) {
  data.validate();
  if (!(tau > 0.0 && tau < 1.0)) throw schema_error("asymptotic covariance: tau outside (0,1)");
  if (data.n_treatments != 2 || model.spec.n_treatments != 2)
    throw schema_error("asymptotic covariance: binary treatment only");
  if (model.spec.contrast_map.kind() != FeatureMapKind::linear_with_intercept ||
      model.spec.baseline_map.kind() != FeatureMapKind::linear_with_intercept)
    throw schema_error("asymptotic covariance: linear feature maps only");
  if (model.residuals.size() != data.n())
    throw schema_error("asymptotic covariance: model was fitted on different data");

  const Eigen::Index n = data.n();
  const double h = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(model.residuals);

  AsymptoticCovariance out;
  out.bandwidth = h;
  const Eigen::Index d = model.spec.contrast_map.dim();
  out.j11 = Eigen::MatrixXd::Zero(d, d);
  out.sigma11 = Eigen::MatrixXd::Zero(d, d);
  out.bound = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xt = model.spec.contrast_map.evaluate(data.x.row(i));
    const double pi = data.prop(i, 0);
    const Eigen::MatrixXd outer = pi * (1.0 - pi) * (xt * xt.transpose());
    const double r = model.residuals[i];
    const double kernel = normal_pdf(r / h) / h;
    const double psi = tau - (r < 0.0 ? 1.0 : 0.0);
    out.j11 += kernel * outer;
    out.sigma11 += psi * psi * outer;
    out.bound += outer;
  }
  const double nn = static_cast<double>(n);
  out.j11 /= nn;
  out.sigma11 /= nn;
  out.bound *= (tau * tau + std::abs(1.0 - 2.0 * tau)) / nn;

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.j11);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > 1e-12 * std::max(1.0, max_eig)))
    throw singular_design_error(
        "asymptotic covariance: singular J11 (condition number " +
        std::to_string(max_eig / std::max(min_eig, 1e-300)) + ")");
  const Eigen::MatrixXd j_inv = out.j11.inverse();
  out.covariance = j_inv * out.sigma11 * j_inv / nn;
  return out;
}

}  // namespace ritr
