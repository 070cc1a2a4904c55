#pragma once

// Benchmark data generator: a scale-free base network whose edges either
// persist, ramp in, or ramp out linearly across ordinal covariate levels,
// and Gaussian samples drawn from the resulting precision matrices.

#include "nexon/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace nexon {

/// Deterministic sub-seed for an independent random stream (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct SimulationConfig {
  int P = 100;
  std::vector<OrdinalLevel> levels{{1}, {2}, {3}, {4}};
  int n_base_edges = -1;  // -1 means P
  int n_appearing = 50;
  int n_disappearing = 50;
  int n_per_group = 150;
  double partial_corr_magnitude = 0.2;
  double jitter_margin = 0.1;
  std::uint64_t seed = 1;

  int base_edges() const { return n_base_edges < 0 ? P : n_base_edges; }

  void validate() const {
    if (P < 3) throw ConfigError("simulation: P must be at least 3");
    if (levels.empty()) throw ConfigError("simulation: at least one level is required");
    for (std::size_t k = 1; k < levels.size(); ++k)
      if (!(levels[k - 1] < levels[k]))
        throw ConfigError("simulation: levels must be strictly increasing");
    const auto total = static_cast<long long>(edge_count(P));
    if (base_edges() < P - 1 || base_edges() > total)
      throw ConfigError("simulation: n_base_edges must lie in [P-1, P(P-1)/2]");
    if (n_disappearing < 0 || n_disappearing > base_edges())
      throw ConfigError("simulation: n_disappearing must lie in [0, n_base_edges]");
    if (n_appearing < 0 || n_appearing > total - base_edges())
      throw ConfigError("simulation: n_appearing exceeds the number of non-edges");
    if (n_per_group < 1) throw ConfigError("simulation: n_per_group must be positive");
    if (!(partial_corr_magnitude > 0.0 && partial_corr_magnitude < 1.0))
      throw ConfigError("simulation: partial_corr_magnitude must lie in (0, 1)");
    if (!(jitter_margin > 0.0)) throw ConfigError("simulation: jitter_margin must be positive");
  }
};

struct SimulationTruth {
  std::vector<OrdinalLevel> levels;
  std::vector<EdgeSet> adjacency;                    // realised support per level
  std::vector<SymmetricMatrix> target_partial_corr;  // before the PD repair
  std::vector<SymmetricMatrix> partial_corr;         // realised
  std::vector<SymmetricMatrix> precision;
  EdgeSet appearing;
  EdgeSet disappearing;
  EdgeSet stable;
};

/// Preferential attachment: a tree grown one node at a time with attachment
/// probability proportional to degree, then extra edges whose endpoints are
/// both drawn proportionally to degree.
inline EdgeSet generate_scale_free_graph(int P, int n_edges, std::uint64_t seed) {
  if (P < 3) throw ConfigError("scale-free graph: P must be at least 3");
  if (static_cast<long long>(n_edges) > static_cast<long long>(edge_count(P)))
    throw ConfigError("scale-free graph: n_edges exceeds P(P-1)/2");
  if (n_edges < P - 1) throw ConfigError("scale-free graph: n_edges must be at least P-1");

  std::mt19937_64 rng(seed);
  EdgeSet g;
  std::vector<int> endpoints;  // node v appears deg(v) times
  endpoints.reserve(2 * static_cast<std::size_t>(n_edges));
  auto add = [&](int u, int v) {
    g.insert(u, v);
    endpoints.push_back(u);
    endpoints.push_back(v);
  };

  add(0, 1);
  for (int v = 2; v < P; ++v) {
    std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
    add(endpoints[pick(rng)], v);
  }

  const auto target = static_cast<std::size_t>(n_edges);
  std::size_t failures = 0;
  while (g.size() < target && failures < 100000) {
    std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
    const int u = endpoints[pick(rng)];
    const int v = endpoints[pick(rng)];
    if (u == v || g.contains(u, v)) {
      ++failures;
      continue;
    }
    add(u, v);
  }
  // Near-complete graphs: fill the remainder uniformly from the non-edges.
  if (g.size() < target) {
    std::vector<EdgeSet::Edge> free;
    for (int i = 0; i < P; ++i)
      for (int j = i + 1; j < P; ++j)
        if (!g.contains(i, j)) free.emplace_back(i, j);
    std::shuffle(free.begin(), free.end(), rng);
    for (std::size_t k = 0; g.size() < target; ++k) add(free[k].first, free[k].second);
  }
  return g;
}

struct EdgeTrajectories {
  EdgeSet appearing;
  EdgeSet disappearing;
  EdgeSet stable;
};

inline EdgeTrajectories assign_edge_trajectories(const EdgeSet& base, int P, int n_appearing,
                                                 int n_disappearing, std::uint64_t seed) {
  if (n_disappearing < 0 || static_cast<std::size_t>(n_disappearing) > base.size())
    throw ConfigError("edge trajectories: n_disappearing exceeds the base edge count");
  std::vector<EdgeSet::Edge> present(base.begin(), base.end());
  std::vector<EdgeSet::Edge> absent;
  for (int i = 0; i < P; ++i)
    for (int j = i + 1; j < P; ++j)
      if (!base.contains(i, j)) absent.emplace_back(i, j);
  if (n_appearing < 0 || static_cast<std::size_t>(n_appearing) > absent.size())
    throw ConfigError("edge trajectories: not enough non-edges for " +
                      std::to_string(n_appearing) + " appearing edges");

  std::mt19937_64 rng(seed);
  std::shuffle(present.begin(), present.end(), rng);
  std::shuffle(absent.begin(), absent.end(), rng);

  EdgeTrajectories t;
  for (std::size_t k = 0; k < present.size(); ++k) {
    const auto [i, j] = present[k];
    if (k < static_cast<std::size_t>(n_disappearing))
      t.disappearing.insert(i, j);
    else
      t.stable.insert(i, j);
  }
  for (int k = 0; k < n_appearing; ++k) t.appearing.insert(absent[k].first, absent[k].second);
  return t;
}

/// Builds one precision matrix per level. Targets ramp linearly in level
/// rank; each matrix is repaired by diagonal inflation when indefinite and
/// then rescaled to unit diagonal.
inline SimulationTruth build_precision_sequence(const EdgeTrajectories& sets, int P,
                                                const std::vector<OrdinalLevel>& levels,
                                                double magnitude, double jitter_margin,
                                                std::uint64_t sign_seed) {
  if (levels.empty()) throw ConfigError("precision sequence: no levels");
  for (std::size_t k = 1; k < levels.size(); ++k)
    if (!(levels[k - 1] < levels[k]))
      throw ConfigError("precision sequence: levels must be sorted ascending");
  if (!(magnitude > 0.0 && magnitude < 1.0))
    throw ConfigError("precision sequence: magnitude must lie in (0, 1)");

  // Signs are drawn once per edge, in canonical edge order, and held fixed.
  std::mt19937_64 rng(sign_seed);
  std::bernoulli_distribution coin(0.5);
  Matrix sign = Matrix::Zero(P, P);
  for (const auto* s : {&sets.stable, &sets.disappearing, &sets.appearing})
    for (auto [i, j] : *s) sign(i, j) = coin(rng) ? 1.0 : -1.0;

  SimulationTruth truth;
  truth.levels = levels;
  truth.appearing = sets.appearing;
  truth.disappearing = sets.disappearing;
  truth.stable = sets.stable;

  const auto L = levels.size();
  for (std::size_t r = 0; r < L; ++r) {
    const double t = L == 1 ? 0.0 : static_cast<double>(r) / static_cast<double>(L - 1);
    SymmetricMatrix target(P);
    for (int i = 0; i < P; ++i) target.set(i, i, 1.0);
    for (auto [i, j] : sets.stable) target.set(i, j, sign(i, j) * magnitude);
    for (auto [i, j] : sets.appearing) target.set(i, j, sign(i, j) * magnitude * t);
    for (auto [i, j] : sets.disappearing) target.set(i, j, sign(i, j) * magnitude * (1.0 - t));

    Matrix omega = -target.dense();
    omega.diagonal().setOnes();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(omega, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig <= 0.0) omega.diagonal().array() += std::abs(min_eig) + jitter_margin;
    if (!is_positive_definite(omega))
      throw NumericalError("precision sequence: could not repair level " +
                           std::to_string(levels[r].value) + " to positive definiteness");
    const Vector inv_sd = omega.diagonal().cwiseSqrt().cwiseInverse();
    omega = inv_sd.asDiagonal() * omega * inv_sd.asDiagonal();
    omega.diagonal().setOnes();
    omega = 0.5 * (omega + omega.transpose());

    SymmetricMatrix prec(omega);
    auto rho = partial_correlations(prec);
    truth.adjacency.push_back(support(rho.dense(), 1e-12));
    truth.target_partial_corr.push_back(std::move(target));
    truth.partial_corr.push_back(std::move(rho));
    truth.precision.push_back(std::move(prec));
  }
  return truth;
}

/// N draws from N(0, precision^{-1}): factor precision = L L^T, solve L^T x = z.
inline Matrix sample_mvn(const SymmetricMatrix& precision, int N, std::uint64_t seed) {
  if (N < 1) throw ConfigError("sample_mvn: N must be positive");
  Eigen::LLT<Matrix> llt(precision.dense());
  if (llt.info() != Eigen::Success || !is_positive_definite(precision))
    throw NumericalError("sample_mvn: precision matrix is not positive definite");
  const auto P = precision.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(P, N);
  for (Eigen::Index n = 0; n < N; ++n)
    for (Eigen::Index i = 0; i < P; ++i) z(i, n) = normal(rng);
  Matrix x = llt.matrixU().solve(z);
  return x.transpose();
}

struct SimulatedExperiment {
  GroupedDataset data;
  SimulationTruth truth;
};

inline SimulatedExperiment simulate_experiment(const SimulationConfig& config) {
  config.validate();
  const auto base = generate_scale_free_graph(config.P, config.base_edges(),
                                              derive_seed(config.seed, 1));
  const auto sets = assign_edge_trajectories(base, config.P, config.n_appearing,
                                             config.n_disappearing, derive_seed(config.seed, 2));
  SimulatedExperiment out;
  out.truth = build_precision_sequence(sets, config.P, config.levels,
                                       config.partial_corr_magnitude, config.jitter_margin,
                                       derive_seed(config.seed, 3));
  for (std::size_t k = 0; k < config.levels.size(); ++k) {
    out.data.groups.push_back(
        {config.levels[k], sample_mvn(out.truth.precision[k], config.n_per_group,
                                      derive_seed(config.seed, 100 + k))});
  }
  out.data.variable_names.reserve(config.P);
  for (int i = 0; i < config.P; ++i) out.data.variable_names.push_back("V" + std::to_string(i + 1));
  return out;
}

}  // namespace nexon
