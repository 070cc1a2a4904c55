#include "nexon/engine.hpp"
#include "nexon/simulate.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <functional>
#include <numeric>

using namespace nexon;
using nexon::testing::random_matrix;
using nexon::testing::random_spd;

namespace {

constexpr double kPi = std::numbers::pi;

double gauss_density(double x, double sd) {
  return std::exp(-0.5 * x * x / (sd * sd)) / (std::sqrt(2.0 * kPi) * sd);
}

Hyperparameters hyper_for(std::size_t L, double nu0 = 0.05) {
  Hyperparameters h;
  h.nu0.assign(L, nu0);
  return h;
}

// Expected complete-data log posterior as a function of column j of Omega,
// all other entries held fixed.
double column_objective(const Matrix& omega, const Matrix& scatter, double n, const Vector& d,
                        double lambda) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  double f = 0.5 * n * logdet - 0.5 * (scatter.cwiseProduct(omega)).sum();
  const auto P = omega.rows();
  for (Eigen::Index i = 0; i < P; ++i) {
    f -= 0.5 * lambda * omega(i, i);
    for (Eigen::Index j = i + 1; j < P; ++j) f -= 0.5 * d(i * P + j) * omega(i, j) * omega(i, j);
  }
  return f;
}

// Damped Newton on a finite-difference gradient and Hessian.
Vector maximise_numerically(const std::function<double(const Vector&)>& f, Vector x) {
  const auto n = x.size();
  auto grad = [&](const Vector& v) {
    Vector g(n);
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < n; ++k) {
      Vector a = v, b = v;
      a(k) += h;
      b(k) -= h;
      g(k) = (f(a) - f(b)) / (2 * h);
    }
    return g;
  };
  for (int it = 0; it < 100; ++it) {
    const Vector g = grad(x);
    if (g.norm() < 1e-9) break;
    Matrix H(n, n);
    const double h = 1e-4;
    for (Eigen::Index k = 0; k < n; ++k) {
      Vector a = x, b = x;
      a(k) += h;
      b(k) -= h;
      H.col(k) = (grad(a) - grad(b)) / (2 * h);
    }
    H = 0.5 * (H + H.transpose());
    Vector step = -H.ldlt().solve(g);
    double t = 1.0;
    const double f0 = f(x);
    while (t > 1e-8 && !(f(x + t * step) >= f0)) t *= 0.5;
    x += t * step;
  }
  return x;
}

}  // namespace

// ------------------------------------------------------------------ init

TEST(InitState, StatedInitialisation) {
  GroupedDataset ds;
  std::mt19937_64 rng(1);
  ds.groups.push_back({{1}, random_matrix(5, 3, rng)});
  ds.groups.push_back({{2}, random_matrix(5, 3, rng)});
  const auto h = hyper_for(2);
  const auto s = init_state(ds, h);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(s.omega[k], Matrix::Identity(3, 3));
    EXPECT_TRUE(is_positive_definite(s.omega[k]));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) {
          EXPECT_EQ(s.ppi[k](i, j), 0.5);
          EXPECT_EQ(s.ez[k](i, j), 0.0);
        }
  }
  EXPECT_EQ(s.beta_var(0, 1), 2.0);
  EXPECT_EQ(s.zeta_mean(0, 1), h.n0);
  EXPECT_EQ(s.zeta_var(0, 1), h.t0_sq);
  EXPECT_EQ(s.sigma_shape, 2.0);
  EXPECT_EQ(s.sigma_rate, 2.0);
}

// --------------------------------------------------------------- latents

TEST(EdgeLatents, EqualDensitiesGiveOneHalf) {
  const double nu0 = 0.05, nu1 = 1.0;
  const double w = std::sqrt(2.0 * std::log(nu1 / nu0) / (1.0 / (nu0 * nu0) - 1.0 / (nu1 * nu1)));
  EXPECT_NEAR(edge_latent(w, 0.0, nu0, nu1).ppi, 0.5, 1e-12);
}

TEST(EdgeLatents, HalfNormalMeansAtZeroIndex) {
  for (double w : {0.0, 0.05, 0.12, 0.5}) {
    const auto e = edge_latent(w, 0.0, 0.05, 1.0);
    EXPECT_NEAR(e.ez, (2.0 * e.ppi - 1.0) * 0.7978845608028654, 1e-12);
  }
}

TEST(EdgeLatents, MatchesTwoPointPosterior) {
  const double w = 0.3, nu0 = 0.02, nu1 = 1.0;
  const double slab = gauss_density(w, nu1) * 0.5;
  const double spike = gauss_density(w, nu0) * 0.5;
  EXPECT_NEAR(edge_latent(w, 0.0, nu0, nu1).ppi, slab / (slab + spike), 1e-12);
  // Non-zero probit index: prior weights Phi(m) and 1 - Phi(m).
  const double m = -1.3;
  const double pm = 0.5 * std::erfc(-m / std::sqrt(2.0));
  const double w2 = 0.08;
  const double s1 = gauss_density(w2, nu1) * pm, s0 = gauss_density(w2, nu0) * (1 - pm);
  EXPECT_NEAR(edge_latent(w2, m, nu0, nu1).ppi, s1 / (s1 + s0), 1e-12);
}

TEST(EdgeLatents, ExtremeValuesStayInUnitInterval) {
  for (double w : {0.0, 1e-6, 0.5, 3.0, 50.0})
    for (double m : {-38.0, -5.0, 0.0, 5.0, 38.0}) {
      const auto e = edge_latent(w, m, 1e-3, 1.0);
      EXPECT_GE(e.ppi, 0.0);
      EXPECT_LE(e.ppi, 1.0);
      EXPECT_TRUE(std::isfinite(e.ez) && std::isfinite(e.ez2) && std::isfinite(e.entropy));
      EXPECT_GE(e.ez2, e.ez * e.ez - 1e-12);
    }
}

// ------------------------------------------------------------ zeta / beta

TEST(UpdateZeta, ZeroInputsGiveZeroMean) {
  auto h = hyper_for(2);
  h.n0 = 0.0;
  auto s = init_state({1.0, 2.0}, 3, h);
  EXPECT_EQ(update_zeta(s, h, 0, 1).mean, 0.0);
}

TEST(UpdateZeta, FlatPriorLimit) {
  auto h = hyper_for(1);
  h.t0_sq = 1e14;
  auto s = init_state({3.0}, 2, h);
  s.ez[0](0, 1) = 0.9;
  s.beta_mean(0, 1) = 0.2;
  EXPECT_NEAR(update_zeta(s, h, 0, 1).mean, 0.9 - 3.0 * 0.2, 1e-10);
}

TEST(UpdateZeta, PlugInExample) {
  auto h = hyper_for(2);
  h.n0 = -1.0;
  h.t0_sq = 1.0;
  auto s = init_state({1.0, 2.0}, 2, h);
  s.ez[0](0, 1) = 0.5;
  s.ez[1](0, 1) = 0.7;
  s.beta_mean(0, 1) = 0.1;
  const auto f = update_zeta(s, h, 0, 1);
  EXPECT_NEAR(f.mean, (-1.0 + (0.5 - 0.1) + (0.7 - 0.2)) / 3.0, 1e-12);
  EXPECT_NEAR(f.mean, -0.0333333333333333, 1e-12);
  EXPECT_NEAR(f.var, 1.0 / 3.0, 1e-12);
}

TEST(UpdateBeta, NoCovariateSignal) {
  auto h = hyper_for(3);
  auto s = init_state({1.0, 2.0, 3.0}, 2, h);
  for (std::size_t k = 0; k < 3; ++k) s.ez[k](0, 1) = s.zeta_mean(0, 1);
  EXPECT_NEAR(update_beta(s, h, 0, 1).mean, 0.0, 1e-15);
}

TEST(UpdateBeta, SingleLevel) {
  auto h = hyper_for(1);
  auto s = init_state({1.0}, 2, h);
  s.sigma_shape = 3.0;
  s.sigma_rate = 3.0;
  s.zeta_mean(0, 1) = 0.1;
  s.ez[0](0, 1) = 0.5;
  const auto f = update_beta(s, h, 0, 1);
  EXPECT_NEAR(f.mean, 0.2, 1e-12);
  EXPECT_NEAR(f.var, 0.5, 1e-12);
}

TEST(UpdateBeta, FourLevelsPlugIn) {
  auto h = hyper_for(4);
  auto s = init_state({1.0, 2.0, 3.0, 4.0}, 2, h);
  s.sigma_shape = s.sigma_rate = 1.5;
  s.zeta_mean(0, 1) = -0.4;
  const std::array<double, 4> ez{-0.9, -0.2, 0.3, 1.1};
  for (std::size_t k = 0; k < 4; ++k) s.ez[k](0, 1) = ez[k];
  const auto f = update_beta(s, h, 0, 1);
  double num = 0.0;
  for (int a = 1; a <= 4; ++a) num += a * (ez[a - 1] + 0.4);
  EXPECT_NEAR(1.0 / f.var, 31.0, 1e-12);
  EXPECT_NEAR(f.mean, num / 31.0, 1e-12);
}

TEST(UpdateSigma, Examples) {
  auto h = hyper_for(1);
  auto s = init_state({1.0}, 2, h);
  s.beta_var.setZero();
  EXPECT_EQ(update_sigma(s, h).rate, 2.0);
  s.beta_mean(0, 1) = s.beta_mean(1, 0) = 1.0;
  s.beta_var(0, 1) = s.beta_var(1, 0) = 1.0;
  const auto g = update_sigma(s, h);
  EXPECT_EQ(g.shape, 2.5);
  EXPECT_EQ(g.rate, 3.0);
}

TEST(UpdateSigma, MatchesSummationOracle) {
  auto h = hyper_for(1);
  auto s = init_state({1.0}, 20, h);
  std::mt19937_64 rng(4);
  s.beta_mean = nexon::testing::symmetrise(random_matrix(20, 20, rng));
  s.beta_var = nexon::testing::symmetrise(random_matrix(20, 20, rng).cwiseAbs());
  double sum = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int j = i + 1; j < 20; ++j) sum += s.beta_mean(i, j) * s.beta_mean(i, j) + s.beta_var(i, j);
  const auto g = update_sigma(s, h);
  EXPECT_NEAR(g.shape, 2.0 + 190.0 / 2.0, 1e-12);
  EXPECT_NEAR(g.rate, 2.0 + sum / 2.0, 1e-12);
}

// ---------------------------------------------------------------- CM step

TEST(CmStep, SpikeLimitTwoByTwo) {
  const double n = 40.0, lambda = 1.0;
  const Matrix scatter = n * Matrix::Identity(2, 2);
  const Matrix ppi = Matrix::Zero(2, 2);
  const Matrix out = cm_update_precision(Matrix::Identity(2, 2), ppi, scatter, n, 1e-6, 1.0, lambda);
  EXPECT_NEAR(out(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(out(1, 1), n / (n + lambda), 1e-12);
  EXPECT_TRUE(is_positive_definite(out));
}

TEST(CmStep, ColumnIsNumericalArgmax) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double n = 30.0, lambda = 1.0, nu0 = 0.1, nu1 = 1.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix y = center_columns(random_matrix(30, 4, rng) * random_spd(4, rng));
    const Matrix scatter = sample_covariance(y).dense();
    const Matrix omega = random_spd(4, rng);
    Matrix ppi(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) ppi(i, j) = ppi(j, i) = u(rng);
    Vector d(16);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) d(i * 4 + j) = ppi(i, j) / (nu1 * nu1) + (1 - ppi(i, j)) / (nu0 * nu0);
    const int col = rep % 4;
    auto as_matrix = [&](const Vector& x) {
      Matrix m = omega;
      for (int r = 0, k = 0; r < 4; ++r) {
        if (r == col) continue;
        m(r, col) = m(col, r) = x(k++);
      }
      m(col, col) = x(3);
      return m;
    };
    Vector x0(4);
    for (int r = 0, k = 0; r < 4; ++r)
      if (r != col) x0(k++) = omega(r, col);
    x0(3) = omega(col, col);
    const Vector best = maximise_numerically(
        [&](const Vector& x) { return column_objective(as_matrix(x), scatter, n, d, lambda); }, x0);
    const Matrix got = cm_update_column(omega, ppi, scatter, n, nu0, nu1, lambda, col);
    EXPECT_LT((got - as_matrix(best)).cwiseAbs().maxCoeff(), 1e-6) << "column " << col;
  }
}

TEST(CmStep, SweepMatchesSequentialColumnUpdates) {
  std::mt19937_64 rng(9);
  const Matrix y = center_columns(random_matrix(40, 7, rng));
  const Matrix scatter = sample_covariance(y).dense();
  Matrix ppi = Matrix::Constant(7, 7, 0.3);
  ppi(0, 3) = ppi(3, 0) = 0.95;
  Matrix reference = random_spd(7, rng);
  const Matrix swept = cm_update_precision(reference, ppi, scatter, 40.0, 0.05, 1.0, 1.0);
  for (int j = 0; j < 7; ++j) reference = cm_update_column(reference, ppi, scatter, 40.0, 0.05, 1.0, 1.0, j);
  EXPECT_LT((swept - reference).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(CmStep, StaysPositiveDefinite) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix y = center_columns(random_matrix(15, 12, rng));
    const Matrix scatter = sample_covariance(y).dense();
    Matrix ppi(12, 12);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j <= i; ++j) ppi(i, j) = ppi(j, i) = u(rng);
    Matrix omega = Matrix::Identity(12, 12);
    for (int s = 0; s < 5; ++s) {
      omega = cm_update_precision(omega, ppi, scatter, 15.0, 0.01, 1.0, 1.0);
      ASSERT_TRUE(is_positive_definite(omega));
    }
  }
}

TEST(CmStep, InfinitePriorPrecisionPinsEntriesAtZero) {
  std::mt19937_64 rng(12);
  const Matrix scatter = sample_covariance(center_columns(random_matrix(30, 5, rng))).dense();
  Matrix prior = Matrix::Constant(5, 5, 1.0);
  prior(1, 3) = prior(3, 1) = std::numeric_limits<double>::infinity();
  Matrix omega = Matrix::Identity(5, 5);
  for (int s = 0; s < 10; ++s) omega = cm_sweep(omega, prior, scatter, 30.0, 1.0);
  EXPECT_EQ(omega(1, 3), 0.0);
  EXPECT_NE(omega(0, 1), 0.0);
}

// -------------------------------------------------------------------- ELBO

class SmallFit : public ::testing::Test {
 protected:
  static GroupedDataset make_data(std::uint64_t seed, int P = 20) {
    SimulationConfig c;
    c.P = P;
    c.n_base_edges = P;
    c.n_appearing = P / 2;
    c.n_disappearing = P / 2;
    c.n_per_group = 100;
    c.seed = seed;
    return center_groups(simulate_experiment(c).data);
  }
};

TEST_F(SmallFit, LatentOnlyIterationsDoNotDecreaseElbo) {
  const auto ds = make_data(2, 10);
  const auto h = default_hyperparameters(10, 4);
  auto s = init_state(ds, h);
  const auto stats = level_statistics(ds);
  double prev = compute_elbo(s, h, stats);
  for (int it = 0; it < 5; ++it) {
    for (std::size_t k = 0; k < 4; ++k) update_edge_latents(s, h, k);
    const double a = compute_elbo(s, h, stats);
    update_all_zeta(s, h);
    const double b = compute_elbo(s, h, stats);
    update_all_beta(s, h);
    const double c = compute_elbo(s, h, stats);
    const auto g = update_sigma(s, h);
    s.sigma_shape = g.shape;
    s.sigma_rate = g.rate;
    const double d = compute_elbo(s, h, stats);
    for (double v : {a, b, c, d}) {
      EXPECT_GE(v - prev, -1e-9 * std::abs(v));
      prev = v;
    }
  }
}

TEST_F(SmallFit, ZetaUpdateChangeMatchesDirectObjective) {
  // Single level, P = 3: the zeta-dependent part of the objective written
  // out independently of elbo_terms.
  std::mt19937_64 rng(5);
  GroupedDataset ds;
  ds.groups.push_back({{2}, center_columns(random_matrix(30, 3, rng))});
  auto h = hyper_for(1);
  h.n0 = -0.7;
  h.t0_sq = 0.8;
  auto s = init_state(ds, h);
  s.beta_mean.setConstant(0.15);
  update_edge_latents(s, h, 0);
  const auto stats = level_statistics(ds);

  auto zeta_part = [&](const VariationalState& st) {
    double f = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        const double mu = st.zeta_mean(i, j), v = st.zeta_var(i, j);
        const double a = 2.0, b = st.beta_mean(i, j), bv = st.beta_var(i, j);
        // E log N(z; zeta + a beta, 1)
        const double em = mu + a * b;
        const double em2 = v + mu * mu + 2 * a * mu * b + a * a * (bv + b * b);
        f += -0.5 * std::log(2 * kPi) - 0.5 * (st.ez2[0](i, j) - 2 * st.ez[0](i, j) * em + em2);
        // E log N(zeta; n0, t0^2) + entropy of q(zeta)
        f += -0.5 * std::log(2 * kPi * h.t0_sq) - 0.5 * (v + (mu - h.n0) * (mu - h.n0)) / h.t0_sq;
        f += 0.5 * std::log(2 * kPi * std::exp(1.0) * v);
      }
    return f;
  };
  const double before = compute_elbo(s, h, stats);
  const double direct_before = zeta_part(s);
  update_all_zeta(s, h);
  const double after = compute_elbo(s, h, stats);
  EXPECT_NEAR(after - before, zeta_part(s) - direct_before, 1e-8);
  EXPECT_GT(after, before);

  // The update is a stationary point: nudging the mean either way lowers it.
  for (double eps : {1e-4, -1e-4}) {
    auto t = s;
    t.zeta_mean(0, 1) += eps;
    t.zeta_mean(1, 0) += eps;
    EXPECT_LT(compute_elbo(t, h, stats), after);
  }
}

TEST(ElboTerms, NamesFirstNonFiniteTerm) {
  auto h = hyper_for(1);
  auto s = init_state({1.0}, 3, h);
  s.omega[0](0, 0) = -1.0;
  std::vector<LevelData> stats{{1.0, 10.0, Matrix::Identity(3, 3)}};
  EXPECT_EQ(elbo_terms(s, h, stats).first_non_finite(), "log_likelihood");
}

TEST_F(SmallFit, ConvergesWithMonotoneTraceAndValidState) {
  const auto ds = make_data(3);
  const auto h = default_hyperparameters(20, 4);
  FitControls fc;
  bool pd_every_iteration = true;
  const auto r = fit(ds, h, fc, [&](int, const VariationalState& s) {
    for (const auto& om : s.omega) pd_every_iteration = pd_every_iteration && is_positive_definite(om);
  });
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 1000);
  EXPECT_EQ(static_cast<int>(r.elbo_trace.size()), r.iterations);
  EXPECT_TRUE(pd_every_iteration);
  for (std::size_t t = 1; t < r.elbo_trace.size(); ++t)
    EXPECT_GE(r.elbo_trace[t] - r.elbo_trace[t - 1], -1e-6 * std::abs(r.elbo_trace[t]));
  const auto& s = r.final_state;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_GE(s.ppi[k].minCoeff(), 0.0);
    EXPECT_LE(s.ppi[k].maxCoeff(), 1.0);
  }
  EXPECT_GT(s.zeta_var.minCoeff(), 0.0);
  EXPECT_GT(s.beta_var.minCoeff(), 0.0);
  EXPECT_GT(s.sigma_shape, 0.0);
  EXPECT_GT(s.sigma_rate, 0.0);
}

TEST_F(SmallFit, NodeRelabelingPermutesEstimates) {
  const auto ds = make_data(4, 12);
  const auto h = default_hyperparameters(12, 4);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(77));
  GroupedDataset permuted = ds;
  for (auto& g : permuted.groups) {
    Matrix m(g.data.rows(), 12);
    for (int c = 0; c < 12; ++c) m.col(c) = g.data.col(perm[c]);
    g.data = m;
  }
  FitControls tight;
  tight.elbo_rel_tol = 1e-14;
  tight.max_iter = 5000;
  const auto a = fit(ds, h, tight).final_state;
  const auto b = fit(permuted, h, tight).final_state;
  for (int i = 0; i < 12; ++i)
    for (int j = 0; j < 12; ++j) {
      if (i == j) continue;
      for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(b.ppi[k](i, j), a.ppi[k](perm[i], perm[j]), 1e-6);
      EXPECT_NEAR(b.beta_mean(i, j), a.beta_mean(perm[i], perm[j]), 1e-6);
      EXPECT_NEAR(b.zeta_mean(i, j), a.zeta_mean(perm[i], perm[j]), 1e-6);
    }
}

TEST_F(SmallFit, ParallelLevelsMatchSerial) {
  const auto ds = make_data(6, 15);
  const auto h = default_hyperparameters(15, 4);
  FitControls one, four;
  four.threads = 4;
  const auto a = fit(ds, h, one);
  const auto b = fit(ds, h, four);
  ASSERT_EQ(a.elbo_trace.size(), b.elbo_trace.size());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a.final_state.ppi[k], b.final_state.ppi[k]);
}

TEST(TinyModel, PpiTracksBruteForcePosterior) {
  // P = 3, one level, N = 50; one strong edge (0,1). The posterior over
  // (omega_01, omega_02, omega_12, delta) is integrated on a grid with the
  // diagonal held at the fitted values and zeta integrated out exactly.
  Matrix truth = Matrix::Identity(3, 3);
  truth(0, 1) = truth(1, 0) = -0.45;
  const Matrix y = center_columns(sample_mvn(SymmetricMatrix(truth), 50, 17));
  const Matrix scatter = sample_covariance(y).dense();
  GroupedDataset ds;
  ds.groups.push_back({{0}, y});
  Hyperparameters h = hyper_for(1, 0.05);
  h.n0 = -0.5;
  h.t0_sq = 1.0;
  FitControls fc;
  fc.elbo_rel_tol = 1e-10;
  const auto stats = level_statistics(ds);
  const auto vb = fit_from(init_state({0.0}, 3, h, false), stats, h, fc).final_state;

  const double prior_in = 0.5 * std::erfc(-(h.n0 / std::sqrt(1.0 + h.t0_sq)) / std::sqrt(2.0));
  const int G = 161;
  std::vector<double> grid(G);
  for (int g = 0; g < G; ++g) grid[g] = -0.8 + 1.6 * g / (G - 1);
  auto marginal_prior = [&](double w, bool slab) {
    return slab ? prior_in * gauss_density(w, h.nu1) : (1 - prior_in) * gauss_density(w, h.nu0[0]);
  };
  std::array<double, 3> incl{0, 0, 0};
  double total = 0.0;
  // Work relative to the log-likelihood at the VB estimate.
  Matrix om = vb.omega[0];
  const double ref = 0.5 * 50 * log_det_spd(om) - 0.5 * scatter.cwiseProduct(om).sum();
  for (double a : grid)
    for (double b : grid)
      for (double c : grid) {
        om(0, 1) = om(1, 0) = a;
        om(0, 2) = om(2, 0) = b;
        om(1, 2) = om(2, 1) = c;
        Eigen::LLT<Matrix> llt(om);
        if (llt.info() != Eigen::Success) continue;
        const double ll = 0.5 * 50 * 2.0 * llt.matrixLLT().diagonal().array().log().sum() -
                          0.5 * scatter.cwiseProduct(om).sum() - ref;
        const double lik = std::exp(ll);
        const std::array<double, 3> w{a, b, c};
        std::array<double, 3> p1{}, p0{};
        for (int e = 0; e < 3; ++e) {
          p1[e] = marginal_prior(w[e], true);
          p0[e] = marginal_prior(w[e], false);
        }
        const double mass = lik * (p1[0] + p0[0]) * (p1[1] + p0[1]) * (p1[2] + p0[2]);
        total += mass;
        for (int e = 0; e < 3; ++e) incl[e] += mass * p1[e] / (p1[e] + p0[e]);
      }
  const std::array<std::pair<int, int>, 3> edges{{{0, 1}, {0, 2}, {1, 2}}};
  for (int e = 0; e < 3; ++e) {
    const double exact = incl[e] / total;
    EXPECT_NEAR(vb.ppi[0](edges[e].first, edges[e].second), exact, 0.1) << "edge " << e;
  }
  EXPECT_GT(vb.ppi[0](0, 1), 0.5);
}

// ---------------------------------------------------------- hyperparameters

TEST(Hyperparameters, SpikeMustBeWellBelowSlab) {
  auto h = hyper_for(2, 0.2);
  EXPECT_THROW(h.validate(2), ConfigError);
  h.nu0 = {0.05};
  EXPECT_THROW(h.validate(2), ConfigError);
  h.nu0 = {0.05, 0.1};
  EXPECT_NO_THROW(h.validate(2));
}

TEST(EdgeCountPrior, DefaultsForHundredNodes) {
  const auto p = edge_count_prior(100, 100.0, 50.0);
  EXPECT_NEAR(p.n0, -2.0496, 1e-4);
  EXPECT_NEAR(p.n0, special::norm_quantile(100.0 / 4950.0), 1e-12);
  EXPECT_EQ(p.t0_sq, 0.25);
}

TEST(EdgeCountPrior, ImpliedSdMatchesTargetAndMonteCarlo) {
  const double M = 4950.0;
  const auto p = edge_count_prior(100, 100.0, 400.0);
  EXPECT_GT(p.t0_sq, 0.25);
  EXPECT_NEAR(detail::implied_edge_count_sd(M, p.n0, p.t0_sq), 400.0, 1e-3);
  // Monte Carlo over zeta of the Binomial-probit mixture variance.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(p.n0, std::sqrt(p.t0_sq));
  double s1 = 0, s2 = 0;
  const int R = 200000;
  for (int r = 0; r < R; ++r) {
    const double pi = special::norm_cdf(z(rng));
    s1 += pi / R;
    s2 += pi * pi / R;
  }
  const double mc = std::sqrt(M * (s1 - s2) + M * M * (s2 - s1 * s1));
  EXPECT_NEAR(detail::implied_edge_count_sd(M, p.n0, p.t0_sq) / mc, 1.0, 0.03);
  // Closed form for the mean inclusion probability.
  EXPECT_NEAR(s1, special::norm_cdf(p.n0 / std::sqrt(1 + p.t0_sq)), 2e-3);
}

TEST(EdgeCountPrior, NoVarianceLimitIsBinomial) {
  const double M = 190.0, n0 = -1.0;
  const double pi = special::norm_cdf(n0);
  EXPECT_NEAR(detail::implied_edge_count_sd(M, n0, 1e-12), std::sqrt(M * pi * (1 - pi)), 1e-4);
}
