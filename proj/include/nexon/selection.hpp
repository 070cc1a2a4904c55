#pragma once

// Extended BIC and the per-level spike-scale line search run on the
// single-network baseline.

#include "nexon/baseline.hpp"
#include "nexon/core.hpp"
#include "nexon/engine.hpp"
#include "nexon/parallel.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace nexon {

/// l = (N/2) log det Omega - tr(S Omega)/2 - (N P / 2) log(2 pi), S = Y^T Y.
inline double gaussian_log_likelihood(const Matrix& omega, const Matrix& data) {
  if (omega.rows() != data.cols())
    throw DataError("gaussian_log_likelihood: dimension mismatch");
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success || !is_positive_definite(omega))
    throw NumericalError("gaussian_log_likelihood: precision matrix is not positive definite");
  const double n = static_cast<double>(data.rows());
  const double p = static_cast<double>(data.cols());
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double trace = (data * omega).cwiseProduct(data).sum();
  return 0.5 * n * logdet - 0.5 * trace - n * p * special::kLogSqrt2Pi;
}

inline double ebic_penalty(std::size_t edges, double n, double p, double gamma) {
  const double e = static_cast<double>(edges);
  return e * std::log(n) + 4.0 * gamma * e * std::log(p);
}

/// BIC_gamma = -2 l + |E| log N + 4 gamma |E| log P, with |E| the number of
/// upper-triangle entries of `omega` whose magnitude exceeds 1e-8.
inline double ebic(const Matrix& omega, const Matrix& data, double gamma) {
  const auto edges = support(omega, 1e-8).size();
  return -2.0 * gaussian_log_likelihood(omega, data) +
         ebic_penalty(edges, static_cast<double>(data.rows()), static_cast<double>(data.cols()), gamma);
}

/// Refits the median probability model: entries with ppi >= 0.5 carry the
/// slab prior, all others are held at exactly zero (the spike mode).
inline Matrix refit_median_model(const Matrix& omega, const Matrix& ppi, const Matrix& data,
                                 double nu1, double lambda_diag, int max_sweeps = 50) {
  const double slab = 1.0 / (nu1 * nu1);
  const Matrix prior = ppi.unaryExpr([&](double p) {
    return p >= 0.5 ? slab : std::numeric_limits<double>::infinity();
  });
  const Matrix scatter = sample_covariance(data).dense();
  const double n = static_cast<double>(data.rows());
  // Start from the diagonal so the zero pattern holds from the first sweep.
  Matrix out = omega.diagonal().asDiagonal();
  for (int s = 0; s < max_sweeps; ++s) {
    Matrix next = cm_sweep(out, prior, scatter, n, lambda_diag);
    const double change = (next - out).cwiseAbs().maxCoeff();
    out = std::move(next);
    if (change < 1e-8) break;
  }
  return out;
}

/// EBIC of a PPI-based estimate: the edge set is {ppi >= 0.5} and the
/// likelihood is evaluated at the refitted median probability model.
inline double ebic_median_model(const Matrix& omega, const Matrix& ppi, const Matrix& data,
                                double nu1, double lambda_diag, double gamma) {
  const Matrix refit = refit_median_model(omega, ppi, data, nu1, lambda_diag);
  return ebic(refit, data, gamma);
}

struct Nu0SearchConfig {
  std::vector<double> grid;  // empty means the default grid for nu1
  double gamma_ebic = 0.5;

  static std::vector<double> default_grid(double nu1, int points = 20) {
    std::vector<double> g(points);
    const double lo = std::log(1e-3), hi = std::log(nu1 / 10.0);
    for (int k = 0; k < points; ++k)
      g[k] = std::exp(points == 1 ? hi : lo + (hi - lo) * k / (points - 1));
    g.back() = nu1 / 10.0;
    return g;
  }

  std::vector<double> resolved_grid(double nu1) const {
    auto g = grid.empty() ? default_grid(nu1) : grid;
    if (g.empty()) throw ConfigError("nu0 search: grid is empty");
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!(g[k] > 0.0) || !(g[k] < nu1))
        throw ConfigError("nu0 search: grid values must lie in (0, nu1)");
      if (k > 0 && !(g[k] > g[k - 1]))
        throw ConfigError("nu0 search: grid must be strictly increasing");
    }
    return g;
  }
};

/// Index of the smallest finite score, ties going to the later (larger nu0)
/// entry; -1 when no score is finite.
inline std::ptrdiff_t argmin_prefer_last(const std::vector<double>& scores) {
  std::ptrdiff_t best = -1;
  for (std::size_t g = 0; g < scores.size(); ++g)
    if (std::isfinite(scores[g]) && (best < 0 || scores[g] <= scores[best]))
      best = static_cast<std::ptrdiff_t>(g);
  return best;
}

struct Nu0Selection {
  int level = 0;
  std::vector<double> grid;
  std::vector<double> ebic;  // NaN where the fit failed
  std::vector<std::string> failures;  // empty string where the fit succeeded
  double selected_nu0 = 0.0;
  std::size_t selected_index = 0;
  SslFit selected_fit;
};

/// For each level independently: fit the baseline at every grid value and
/// keep the EBIC minimiser, ties going to the larger nu0. `base` supplies
/// every baseline parameter except nu0.
inline std::vector<Nu0Selection> line_search_nu0(const GroupedDataset& data, const SslParams& base,
                                                 const Nu0SearchConfig& config,
                                                 const FitControls& controls = {}) {
  data.validate();
  const auto grid = config.resolved_grid(base.nu1);
  const auto L = data.num_levels();
  const auto G = grid.size();

  std::vector<SslFit> fits(L * G);
  std::vector<double> scores(L * G, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(L * G);
  FitControls inner = controls;
  inner.threads = 1;
  parallel_for(L * G, controls.threads, [&](std::size_t task) {
    const auto k = task / G, g = task % G;
    const auto& y = data.groups[k].data;
    SslParams p = base;
    p.nu0 = grid[g];
    try {
      fits[task] = fit_ssl(y, p, inner);
      scores[task] = ebic_median_model(fits[task].omega, fits[task].ppi, y, p.nu1, p.lambda_diag,
                                       config.gamma_ebic);
      if (!std::isfinite(scores[task])) throw NumericalError("EBIC is not finite");
    } catch (const Error& e) {
      errors[task] = e.what();
      scores[task] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  std::vector<Nu0Selection> out(L);
  for (std::size_t k = 0; k < L; ++k) {
    auto& sel = out[k];
    sel.level = data.groups[k].level.value;
    sel.grid = grid;
    for (std::size_t g = 0; g < G; ++g) {
      sel.ebic.push_back(scores[k * G + g]);
      sel.failures.push_back(errors[k * G + g]);
    }
    const auto best = argmin_prefer_last(sel.ebic);
    if (best < 0) {
      std::string msg = "nu0 search: every fit failed for level " + std::to_string(sel.level) + ":";
      for (std::size_t g = 0; g < G; ++g)
        msg += "\n  nu0=" + std::to_string(grid[g]) + ": " + errors[k * G + g];
      throw NumericalError(msg);
    }
    sel.selected_index = static_cast<std::size_t>(best);
    sel.selected_nu0 = grid[sel.selected_index];
    sel.selected_fit = std::move(fits[k * G + sel.selected_index]);
  }
  return out;
}

}  // namespace nexon
