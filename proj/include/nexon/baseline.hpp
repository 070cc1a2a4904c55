#pragma once

// Single-network graphical spike-and-slab baseline. It runs the joint engine
// on one level with the covariate term switched off, so the probit index of
// every edge is its intercept alone.

#include "nexon/core.hpp"
#include "nexon/engine.hpp"

#include <map>

namespace nexon {

struct SslParams {
  double nu0 = 0.05;
  double nu1 = 1.0;
  double lambda_diag = 1.0;
  double n0 = -2.0;
  double t0_sq = 0.25;
};

struct SslFit {
  Matrix omega;
  Matrix ppi;
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;
};

inline Hyperparameters ssl_hyperparameters(const SslParams& p) {
  Hyperparameters h;
  h.nu0 = {p.nu0};
  h.nu1 = p.nu1;
  h.lambda_diag = p.lambda_diag;
  h.n0 = p.n0;
  h.t0_sq = p.t0_sq;
  return h;
}

/// Fits the baseline to one centered N x P data matrix.
inline SslFit fit_ssl(const Matrix& data, const SslParams& params, const FitControls& controls = {}) {
  if (data.rows() < 2) throw DataError("fit_ssl: need at least 2 samples");
  const auto hyper = ssl_hyperparameters(params);
  std::vector<LevelData> stats{{0.0, static_cast<double>(data.rows()), sample_covariance(data).dense()}};
  auto report = fit_from(init_state({0.0}, data.cols(), hyper, false), stats, hyper, controls);
  SslFit out;
  out.omega = std::move(report.final_state.omega.front());
  out.ppi = std::move(report.final_state.ppi.front());
  out.elbo_trace = std::move(report.elbo_trace);
  out.converged = report.converged;
  out.iterations = report.iterations;
  return out;
}

/// Least-squares slope of omega_ij against the level value, per edge.
inline Matrix ols_beta_proxy(const std::vector<double>& levels, const std::vector<Matrix>& omegas) {
  if (levels.size() < 2 || omegas.size() != levels.size())
    throw DataError("ols_beta_proxy: need at least 2 levels with one matrix each");
  const auto L = static_cast<double>(levels.size());
  double mean_a = 0.0;
  for (double a : levels) mean_a += a / L;
  double sxx = 0.0;
  for (double a : levels) sxx += (a - mean_a) * (a - mean_a);
  if (!(sxx > 0.0)) throw DataError("ols_beta_proxy: levels must not all be equal");
  const auto P = omegas.front().rows();
  Matrix slope = Matrix::Zero(P, P);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (omegas[k].rows() != P || omegas[k].cols() != P)
      throw DataError("ols_beta_proxy: matrices differ in shape");
    // sum (a - mean a) * omega; the omega mean term cancels since the
    // centred weights sum to zero.
    slope += ((levels[k] - mean_a) / sxx) * omegas[k];
  }
  slope.diagonal().setZero();
  return slope;
}

}  // namespace nexon
