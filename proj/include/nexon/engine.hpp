#pragma once

// Variational Bayes expectation conditional maximisation for jointly
// estimating one Gaussian graphical model per ordinal covariate level.
//
// Model, per level a and edge i < j:
//   omega_ij | delta ~ delta N(0, nu1^2) + (1 - delta) N(0, nu0(a)^2)
//   omega_ii ~ Exp(lambda_diag / 2)
//   delta = 1{z > 0},   z ~ N(zeta_ij + a beta_ij, 1)
//   zeta_ij ~ N(n0, t0^2),   beta_ij ~ N(0, sigma^2),   sigma^-2 ~ Gamma(alpha, beta)
//
// q factorises into a point mass on each Omega(a) (updated by blockwise
// conditional maximisation), a joint q(delta, z) per edge and level, and
// Gaussian / Gamma factors for zeta, beta and sigma^-2. Each update is an
// exact coordinate ascent step, so the ELBO is non-decreasing.

#include "nexon/core.hpp"
#include "nexon/parallel.hpp"
#include "nexon/special.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace nexon {

struct Hyperparameters {
  std::vector<double> nu0;  // spike sd, one per level in dataset group order
  double nu1 = 1.0;
  double lambda_diag = 1.0;
  double n0 = -2.0;
  double t0_sq = 0.25;
  double alpha_sigma = 2.0;
  double beta_sigma = 2.0;
  double gamma_ebic = 0.5;

  void validate(std::size_t num_levels) const {
    if (nu0.size() != num_levels)
      throw ConfigError("hyperparameters: expected " + std::to_string(num_levels) +
                        " nu0 values, got " + std::to_string(nu0.size()));
    if (!(nu1 > 0.0)) throw ConfigError("hyperparameters: nu1 must be positive");
    for (double v : nu0)
      if (!(v > 0.0) || v > nu1 / 10.0)
        throw ConfigError("hyperparameters: every nu0 must lie in (0, nu1/10]");
    if (!(lambda_diag > 0.0)) throw ConfigError("hyperparameters: lambda_diag must be positive");
    if (!(t0_sq > 0.0)) throw ConfigError("hyperparameters: t0_sq must be positive");
    if (!std::isfinite(n0)) throw ConfigError("hyperparameters: n0 must be finite");
    if (!(alpha_sigma > 0.0) || !(beta_sigma > 0.0))
      throw ConfigError("hyperparameters: alpha_sigma and beta_sigma must be positive");
    if (!(gamma_ebic >= 0.0 && gamma_ebic <= 1.0))
      throw ConfigError("hyperparameters: gamma_ebic must lie in [0, 1]");
  }
};

struct EdgeCountPrior {
  double n0;
  double t0_sq;
};

namespace detail {

// Standard deviation of the number of edges among M pairs when each edge is
// included with probability Phi(zeta), zeta ~ N(n0, t0_sq) drawn once.
inline double implied_edge_count_sd(double M, double n0, double t0_sq) {
  const double t0 = std::sqrt(t0_sq);
  constexpr int kSteps = 4000;
  constexpr double kHalfWidth = 10.0;
  const double h = 2.0 * kHalfWidth / kSteps;
  double e1 = 0.0, e2 = 0.0;
  for (int k = 0; k <= kSteps; ++k) {
    const double x = -kHalfWidth + h * k;
    const double w = special::norm_pdf(x) * ((k == 0 || k == kSteps) ? 0.5 : 1.0) * h;
    const double pi = special::norm_cdf(n0 + t0 * x);
    e1 += w * pi;
    e2 += w * pi * pi;
  }
  const double var = M * (e1 - e2) + M * M * (e2 - e1 * e1);
  return std::sqrt(std::max(var, 0.0));
}

}  // namespace detail

/// Maps prior beliefs about the edge count (mean and sd) to (n0, t0^2).
inline EdgeCountPrior edge_count_prior(int P, double expected_edges, double sd_edges) {
  const double M = static_cast<double>(edge_count(P));
  if (!(expected_edges > 0.0 && expected_edges < M))
    throw ConfigError("edge count prior: expected edge count must lie in (0, P(P-1)/2)");
  if (!(sd_edges > 0.0)) throw ConfigError("edge count prior: sd must be positive");
  EdgeCountPrior out{special::norm_quantile(expected_edges / M), 0.0};
  double lo = 1e-8, hi = 100.0;
  if (detail::implied_edge_count_sd(M, out.n0, lo) >= sd_edges) {
    out.t0_sq = lo;
  } else if (detail::implied_edge_count_sd(M, out.n0, hi) <= sd_edges) {
    out.t0_sq = hi;
  } else {
    for (int it = 0; it < 200 && hi - lo > 1e-10 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (detail::implied_edge_count_sd(M, out.n0, mid) < sd_edges ? lo : hi) = mid;
    }
    out.t0_sq = 0.5 * (lo + hi);
  }
  out.t0_sq = std::max(out.t0_sq, 0.25);
  return out;
}

/// Defaults: nu0 = nu1/20 everywhere, edge-count prior mean P and sd P/2.
inline Hyperparameters default_hyperparameters(int P, std::size_t num_levels) {
  Hyperparameters h;
  h.nu0.assign(num_levels, h.nu1 / 20.0);
  const auto prior = edge_count_prior(P, static_cast<double>(P), 0.5 * P);
  h.n0 = prior.n0;
  h.t0_sq = prior.t0_sq;
  return h;
}

struct FitControls {
  int max_iter = 1000;
  double elbo_rel_tol = 1e-5;
  int min_iter = 5;
  int threads = 1;
  int warm_start_sweeps = 20;  // CM sweeps applied to Omega before iterating
  double warm_start_ppi = 0.9;  // inclusion weight behind those sweeps' prior precision

  void validate() const {
    if (min_iter < 1 || max_iter < min_iter)
      throw ConfigError("fit controls: need max_iter >= min_iter >= 1");
    if (!(elbo_rel_tol > 0.0)) throw ConfigError("fit controls: elbo_rel_tol must be positive");
    if (threads < 1) throw ConfigError("fit controls: threads must be at least 1");
    if (warm_start_sweeps < 0) throw ConfigError("fit controls: warm_start_sweeps must be >= 0");
    if (!(warm_start_ppi > 0.0 && warm_start_ppi <= 1.0))
      throw ConfigError("fit controls: warm_start_ppi must lie in (0, 1]");
  }
};

/// Per-level sufficient statistics.
struct LevelData {
  double level = 0.0;
  double n = 0.0;
  Matrix scatter;  // Y^T Y
};

inline std::vector<LevelData> level_statistics(const GroupedDataset& data) {
  data.validate();
  std::vector<LevelData> out;
  out.reserve(data.num_levels());
  for (const auto& g : data.groups)
    out.push_back({static_cast<double>(g.level.value), static_cast<double>(g.data.rows()),
                   sample_covariance(g.data).dense()});
  return out;
}

struct GaussianFactor {
  double mean;
  double var;
};

struct GammaFactor {
  double shape;
  double rate;
};

struct VariationalState {
  std::vector<double> levels;
  // Per level, P x P. Only off-diagonal entries of the latent-variable
  // matrices are meaningful.
  std::vector<Matrix> omega;
  std::vector<Matrix> ppi;
  std::vector<Matrix> ez;
  std::vector<Matrix> ez2;
  std::vector<Matrix> latent_entropy;  // entropy of q(delta, z) per edge
  Matrix zeta_mean, zeta_var;
  Matrix beta_mean, beta_var;
  double sigma_shape = 0.0;
  double sigma_rate = 0.0;
  // False for the single-network baseline: beta is clamped to 0 and the
  // sigma factor is dropped.
  bool covariate_term = true;

  Eigen::Index dim() const { return zeta_mean.rows(); }
  std::size_t num_levels() const { return levels.size(); }
  double e_sigma_inv() const { return sigma_shape / sigma_rate; }

  double probit_index(std::size_t k, Eigen::Index i, Eigen::Index j) const {
    return zeta_mean(i, j) + (covariate_term ? levels[k] * beta_mean(i, j) : 0.0);
  }
};

inline VariationalState init_state(const std::vector<double>& levels, Eigen::Index P,
                                   const Hyperparameters& hyper, bool covariate_term = true) {
  VariationalState s;
  s.levels = levels;
  s.covariate_term = covariate_term;
  const auto L = levels.size();
  s.omega.assign(L, Matrix::Identity(P, P));
  s.ppi.assign(L, Matrix::Constant(P, P, 0.5));
  s.ez.assign(L, Matrix::Zero(P, P));
  // q(delta, z) starts as a standard normal split at zero.
  s.ez2.assign(L, Matrix::Ones(P, P));
  s.latent_entropy.assign(L, Matrix::Constant(P, P, special::kHalfLog2PiE));
  s.zeta_mean = Matrix::Constant(P, P, hyper.n0);
  s.zeta_var = Matrix::Constant(P, P, hyper.t0_sq);
  s.beta_mean = Matrix::Zero(P, P);
  if (covariate_term) {
    s.beta_var = Matrix::Constant(P, P, hyper.beta_sigma / (hyper.alpha_sigma - 1.0));
    s.sigma_shape = hyper.alpha_sigma;
    s.sigma_rate = hyper.beta_sigma;
  } else {
    s.beta_var = Matrix::Zero(P, P);
    s.sigma_shape = 1.0;
    s.sigma_rate = 1.0;
  }
  return s;
}

inline VariationalState init_state(const GroupedDataset& data, const Hyperparameters& hyper,
                                   bool covariate_term = true) {
  data.validate();
  return init_state(data.level_values(), data.num_variables(), hyper, covariate_term);
}

/// Optimal q(delta, z) for a single edge.
struct EdgeLatent {
  double ppi;
  double ez;
  double ez2;
  double entropy;
};

inline EdgeLatent edge_latent(double omega, double probit_index, double nu0, double nu1) {
  const double log_slab = special::log_norm_pdf(omega, nu1) + special::log_norm_cdf(probit_index);
  const double log_spike =
      special::log_norm_pdf(omega, nu0) + special::log_norm_cdf(-probit_index);
  const double diff = log_slab - log_spike;
  EdgeLatent e{};
  e.ppi = diff >= 0.0 ? 1.0 / (1.0 + std::exp(-diff)) : std::exp(diff) / (1.0 + std::exp(diff));
  const auto t = special::truncated_normal_moments(probit_index);
  const double q = e.ppi;
  e.ez = q * t.mean_above0 + (1.0 - q) * t.mean_below0;
  e.ez2 = q * (t.var_above0 + t.mean_above0 * t.mean_above0) +
          (1.0 - q) * (t.var_below0 + t.mean_below0 * t.mean_below0);
  e.entropy = special::bernoulli_entropy(q);
  if (q > 0.0) e.entropy += q * special::truncated_entropy_above0(probit_index);
  if (q < 1.0) e.entropy += (1.0 - q) * special::truncated_entropy_below0(probit_index);
  return e;
}

/// Refreshes ppi, E[z], E[z^2] and the latent entropy for level k.
inline void update_edge_latents(VariationalState& s, const Hyperparameters& hyper, std::size_t k) {
  const auto P = s.dim();
  for (Eigen::Index j = 1; j < P; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const auto e = edge_latent(s.omega[k](i, j), s.probit_index(k, i, j), hyper.nu0[k], hyper.nu1);
      s.ppi[k](i, j) = s.ppi[k](j, i) = e.ppi;
      s.ez[k](i, j) = s.ez[k](j, i) = e.ez;
      s.ez2[k](i, j) = s.ez2[k](j, i) = e.ez2;
      s.latent_entropy[k](i, j) = s.latent_entropy[k](j, i) = e.entropy;
    }
  }
}

inline GaussianFactor update_zeta(const VariationalState& s, const Hyperparameters& hyper,
                                  Eigen::Index i, Eigen::Index j) {
  const double precision = 1.0 / hyper.t0_sq + static_cast<double>(s.num_levels());
  double acc = hyper.n0 / hyper.t0_sq;
  for (std::size_t k = 0; k < s.num_levels(); ++k)
    acc += s.ez[k](i, j) - (s.covariate_term ? s.levels[k] * s.beta_mean(i, j) : 0.0);
  return {acc / precision, 1.0 / precision};
}

inline GaussianFactor update_beta(const VariationalState& s, const Hyperparameters&,
                                  Eigen::Index i, Eigen::Index j) {
  double precision = s.e_sigma_inv();
  double acc = 0.0;
  for (std::size_t k = 0; k < s.num_levels(); ++k) {
    const double a = s.levels[k];
    precision += a * a;
    acc += a * (s.ez[k](i, j) - s.zeta_mean(i, j));
  }
  return {acc / precision, 1.0 / precision};
}

inline GammaFactor update_sigma(const VariationalState& s, const Hyperparameters& hyper) {
  const auto P = s.dim();
  double sum = 0.0;
  for (Eigen::Index j = 1; j < P; ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      sum += s.beta_mean(i, j) * s.beta_mean(i, j) + s.beta_var(i, j);
  return {hyper.alpha_sigma + 0.5 * static_cast<double>(edge_count(static_cast<int>(P))),
          hyper.beta_sigma + 0.5 * sum};
}

inline void update_all_zeta(VariationalState& s, const Hyperparameters& hyper) {
  const auto P = s.dim();
  for (Eigen::Index j = 1; j < P; ++j)
    for (Eigen::Index i = 0; i < j; ++i) {
      const auto f = update_zeta(s, hyper, i, j);
      s.zeta_mean(i, j) = s.zeta_mean(j, i) = f.mean;
      s.zeta_var(i, j) = s.zeta_var(j, i) = f.var;
    }
}

inline void update_all_beta(VariationalState& s, const Hyperparameters& hyper) {
  const auto P = s.dim();
  for (Eigen::Index j = 1; j < P; ++j)
    for (Eigen::Index i = 0; i < j; ++i) {
      const auto f = update_beta(s, hyper, i, j);
      s.beta_mean(i, j) = s.beta_mean(j, i) = f.mean;
      s.beta_var(i, j) = s.beta_var(j, i) = f.var;
    }
}

/// Expected prior precision of omega_ij under q(delta).
inline double expected_prior_precision(double ppi, double nu0, double nu1) {
  return ppi / (nu1 * nu1) + (1.0 - ppi) / (nu0 * nu0);
}

/// Conditional maximisation of column j alone. Inverts Omega_11 directly;
/// the sweep below uses a running inverse instead.
inline Matrix cm_update_column(Matrix omega, const Matrix& ppi, const Matrix& scatter, double n,
                               double nu0, double nu1, double lambda_diag, Eigen::Index j) {
  const auto P = omega.rows();
  std::vector<Eigen::Index> rest;
  rest.reserve(P - 1);
  for (Eigen::Index i = 0; i < P; ++i)
    if (i != j) rest.push_back(i);
  const Matrix o11 = omega(rest, rest);
  Eigen::LLT<Matrix> llt11(o11);
  if (llt11.info() != Eigen::Success)
    throw NumericalError("CM step: Omega_11 is not positive definite; increase nu0 or lambda_diag");
  const Matrix o11_inv = llt11.solve(Matrix::Identity(P - 1, P - 1));
  const double s22 = scatter(j, j) + lambda_diag;
  Matrix c = s22 * o11_inv;
  for (Eigen::Index r = 0; r < P - 1; ++r)
    c(r, r) += expected_prior_precision(ppi(rest[r], j), nu0, nu1);
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success)
    throw NumericalError("CM step: column system is singular; increase nu0 or lambda_diag");
  const Vector s12 = scatter(rest, j);
  const Vector u = -llt.solve(s12);
  for (Eigen::Index r = 0; r < P - 1; ++r) omega(rest[r], j) = omega(j, rest[r]) = u(r);
  omega(j, j) = n / s22 + u.dot(o11_inv * u);
  return omega;
}

/// One full sweep of column-wise conditional maximisation over Omega.
/// `prior_precision(i, j)` is the Gaussian prior precision on omega_ij; an
/// infinite value pins the entry at zero. Keeps a running inverse so each
/// column costs one Cholesky solve over its free entries.
inline Matrix cm_sweep(const Matrix& omega_in, const Matrix& prior_precision, const Matrix& scatter,
                       double n, double lambda_diag) {
  const auto P = omega_in.rows();
  Matrix omega = omega_in;
  Eigen::LLT<Matrix> llt0(omega);
  if (llt0.info() != Eigen::Success)
    throw NumericalError("CM step: current precision matrix is not positive definite");
  Matrix sigma = llt0.solve(Matrix::Identity(P, P));

  std::vector<Eigen::Index> rest(P - 1);
  std::vector<Eigen::Index> free;  // positions within `rest`
  free.reserve(P - 1);
  for (Eigen::Index j = 0; j < P; ++j) {
    free.clear();
    for (Eigen::Index i = 0, r = 0; i < P; ++i) {
      if (i == j) continue;
      if (std::isfinite(prior_precision(i, j))) free.push_back(r);
      rest[r++] = i;
    }
    const Vector sigma12 = sigma(rest, j);
    const Matrix o11_inv = Matrix(sigma(rest, rest)) - sigma12 * sigma12.transpose() / sigma(j, j);
    if (!o11_inv.allFinite())
      throw NumericalError("CM step: Omega_11 inverse is not finite at column " + std::to_string(j) +
                           "; increase nu0 or lambda_diag");
    const double s22 = scatter(j, j) + lambda_diag;

    Vector u = Vector::Zero(P - 1);
    if (!free.empty()) {
      const auto F = static_cast<Eigen::Index>(free.size());
      Matrix c(F, F);
      Vector rhs(F);
      for (Eigen::Index a = 0; a < F; ++a) {
        for (Eigen::Index b = 0; b < F; ++b) c(a, b) = s22 * o11_inv(free[a], free[b]);
        c(a, a) += prior_precision(rest[free[a]], j);
        rhs(a) = scatter(rest[free[a]], j);
      }
      Eigen::LLT<Matrix> llt(c);
      if (llt.info() != Eigen::Success)
        throw NumericalError("CM step: column " + std::to_string(j) +
                             " system is singular; increase nu0 or lambda_diag");
      const Vector uf = -llt.solve(rhs);
      for (Eigen::Index a = 0; a < F; ++a) u(free[a]) = uf(a);
    }
    const Vector au = o11_inv * u;
    const double schur = n / s22;
    for (Eigen::Index r = 0; r < P - 1; ++r) omega(rest[r], j) = omega(j, rest[r]) = u(r);
    omega(j, j) = schur + u.dot(au);

    // Inverse of the updated matrix via the block formula.
    sigma(rest, rest) = o11_inv + au * au.transpose() / schur;
    const Vector new12 = -au / schur;
    for (Eigen::Index r = 0; r < P - 1; ++r) sigma(rest[r], j) = sigma(j, rest[r]) = new12(r);
    sigma(j, j) = 1.0 / schur;
  }
  return omega;
}

inline Matrix expected_prior_precisions(const Matrix& ppi, double nu0, double nu1) {
  return ppi.unaryExpr([&](double p) { return expected_prior_precision(p, nu0, nu1); });
}

/// One CM sweep under the spike-and-slab prior averaged over q(delta).
inline Matrix cm_update_precision(const Matrix& omega, const Matrix& ppi, const Matrix& scatter,
                                  double n, double nu0, double nu1, double lambda_diag) {
  return cm_sweep(omega, expected_prior_precisions(ppi, nu0, nu1), scatter, n, lambda_diag);
}

inline void cm_update_precision(VariationalState& s, const Hyperparameters& hyper,
                                const LevelData& level, std::size_t k) {
  s.omega[k] = cm_update_precision(s.omega[k], s.ppi[k], level.scatter, level.n, hyper.nu0[k],
                                   hyper.nu1, hyper.lambda_diag);
}

/// Conditional maximisation of Omega alone under a fixed prior-precision
/// matrix, repeated until the entries settle.
inline Matrix warm_start_precision(Matrix omega, const Matrix& prior_precision,
                                   const LevelData& level, double lambda_diag, int max_sweeps) {
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    Matrix next = cm_sweep(omega, prior_precision, level.scatter, level.n, lambda_diag);
    const double change = (next - omega).cwiseAbs().maxCoeff();
    omega = std::move(next);
    if (change < 1e-8) break;
  }
  return omega;
}

/// ELBO split into named contributions so a non-finite value can be traced.
struct ElboTerms {
  double log_likelihood = 0.0;
  double omega_prior = 0.0;     // spike-and-slab off-diagonals + exponential diagonal
  double latent_prior = 0.0;    // E log p(z | zeta, beta)
  double latent_entropy = 0.0;  // entropy of q(delta, z)
  double zeta = 0.0;            // prior + entropy
  double beta = 0.0;            // prior + entropy
  double sigma = 0.0;           // prior + entropy

  double total() const {
    return log_likelihood + omega_prior + latent_prior + latent_entropy + zeta + beta + sigma;
  }

  // Empty when every contribution is finite.
  std::string first_non_finite() const {
    const std::pair<const char*, double> named[] = {
        {"log_likelihood", log_likelihood}, {"omega_prior", omega_prior},
        {"latent_prior", latent_prior},     {"latent_entropy", latent_entropy},
        {"zeta", zeta},                     {"beta", beta},
        {"sigma", sigma}};
    for (auto [name, v] : named)
      if (!std::isfinite(v)) return name;
    return {};
  }
};

inline ElboTerms elbo_terms(const VariationalState& s, const Hyperparameters& hyper,
                            const std::vector<LevelData>& data) {
  using special::kLogSqrt2Pi;
  const auto P = s.dim();
  const double dP = static_cast<double>(P);
  ElboTerms t;
  for (std::size_t k = 0; k < s.num_levels(); ++k) {
    const Matrix& om = s.omega[k];
    const auto& lv = data[k];
    Eigen::LLT<Matrix> llt(om);
    const double logdet = llt.info() == Eigen::Success
                              ? 2.0 * llt.matrixLLT().diagonal().array().log().sum()
                              : std::numeric_limits<double>::quiet_NaN();
    t.log_likelihood += 0.5 * lv.n * logdet - 0.5 * (lv.scatter.cwiseProduct(om)).sum() -
                        lv.n * dP * kLogSqrt2Pi;
    const double half_lambda = 0.5 * hyper.lambda_diag;
    t.omega_prior += dP * std::log(half_lambda) - half_lambda * om.diagonal().sum();

    const double a = s.covariate_term ? s.levels[k] : 0.0;
    for (Eigen::Index j = 1; j < P; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double p = s.ppi[k](i, j);
        const double w = om(i, j);
        t.omega_prior += p * special::log_norm_pdf(w, hyper.nu1) +
                         (1.0 - p) * special::log_norm_pdf(w, hyper.nu0[k]);
        const double m = s.zeta_mean(i, j) + a * s.beta_mean(i, j);
        const double m2 = s.zeta_var(i, j) + a * a * s.beta_var(i, j) + m * m;
        t.latent_prior += -kLogSqrt2Pi - 0.5 * (s.ez2[k](i, j) - 2.0 * s.ez[k](i, j) * m + m2);
        t.latent_entropy += s.latent_entropy[k](i, j);
      }
    }
  }

  const double log_t0 = std::log(hyper.t0_sq);
  double e_log_tau = 0.0, e_tau = 0.0;
  if (s.covariate_term) {
    e_log_tau = special::digamma(s.sigma_shape) - std::log(s.sigma_rate);
    e_tau = s.e_sigma_inv();
  }
  for (Eigen::Index j = 1; j < P; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const double zm = s.zeta_mean(i, j) - hyper.n0;
      const double zv = s.zeta_var(i, j);
      t.zeta += -kLogSqrt2Pi - 0.5 * log_t0 - 0.5 * (zv + zm * zm) / hyper.t0_sq +
                special::kHalfLog2PiE + 0.5 * std::log(zv);
      if (s.covariate_term) {
        const double bm = s.beta_mean(i, j);
        const double bv = s.beta_var(i, j);
        t.beta += -kLogSqrt2Pi + 0.5 * e_log_tau - 0.5 * e_tau * (bm * bm + bv) +
                  special::kHalfLog2PiE + 0.5 * std::log(bv);
      }
    }
  }
  if (s.covariate_term) {
    const double a0 = hyper.alpha_sigma, b0 = hyper.beta_sigma;
    const double a1 = s.sigma_shape, b1 = s.sigma_rate;
    t.sigma = a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * e_log_tau - b0 * e_tau +
              (a1 - std::log(b1) + std::lgamma(a1) + (1.0 - a1) * special::digamma(a1));
  }
  return t;
}

inline double compute_elbo(const VariationalState& s, const Hyperparameters& hyper,
                           const std::vector<LevelData>& data) {
  return elbo_terms(s, hyper, data).total();
}

struct FitReport {
  std::vector<double> elbo_trace;
  int iterations = 0;
  bool converged = false;
  VariationalState final_state;
};

// Called after every full iteration with the iteration index (1-based).
using IterationObserver = std::function<void(int, const VariationalState&)>;

/// Runs the coordinate-ascent loop from a given starting state.
inline FitReport fit_from(VariationalState state, const std::vector<LevelData>& data,
                          const Hyperparameters& hyper, const FitControls& controls,
                          const IterationObserver& observer = {}) {
  controls.validate();
  hyper.validate(state.num_levels());
  if (data.size() != state.num_levels())
    throw DataError("fit: state and data disagree on the number of levels");
  const auto L = state.num_levels();

  if (controls.warm_start_sweeps > 0) {
    const Matrix fill = Matrix::Constant(state.dim(), state.dim(), controls.warm_start_ppi);
    parallel_for(L, controls.threads, [&](std::size_t k) {
      state.omega[k] = warm_start_precision(state.omega[k],
                                            expected_prior_precisions(fill, hyper.nu0[k], hyper.nu1),
                                            data[k], hyper.lambda_diag, controls.warm_start_sweeps);
    });
  }

  FitReport report;
  double previous = 0.0;
  for (int iter = 1; iter <= controls.max_iter; ++iter) {
    parallel_for(L, controls.threads, [&](std::size_t k) { update_edge_latents(state, hyper, k); });
    update_all_zeta(state, hyper);
    if (state.covariate_term) {
      update_all_beta(state, hyper);
      const auto g = update_sigma(state, hyper);
      state.sigma_shape = g.shape;
      state.sigma_rate = g.rate;
    }
    parallel_for(L, controls.threads,
                 [&](std::size_t k) { cm_update_precision(state, hyper, data[k], k); });

    const auto terms = elbo_terms(state, hyper, data);
    if (auto bad = terms.first_non_finite(); !bad.empty())
      throw NumericalError("fit: ELBO term '" + bad + "' is not finite at iteration " +
                           std::to_string(iter));
    const double elbo = terms.total();
    report.elbo_trace.push_back(elbo);
    report.iterations = iter;
    if (observer) observer(iter, state);
    if (iter >= controls.min_iter && iter > 1 &&
        std::abs(elbo - previous) <= controls.elbo_rel_tol * std::abs(elbo)) {
      report.converged = true;
      break;
    }
    previous = elbo;
  }
  report.final_state = std::move(state);
  return report;
}

inline FitReport fit(const GroupedDataset& data, const Hyperparameters& hyper,
                     const FitControls& controls = {}, const IterationObserver& observer = {}) {
  const auto stats = level_statistics(data);
  return fit_from(init_state(data, hyper, true), stats, hyper, controls, observer);
}

}  // namespace nexon
