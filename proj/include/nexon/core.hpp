#pragma once

// Foundational types shared by every nexon module: grouped data, symmetric
// matrices, edge sets, and the small matrix helpers the estimators rely on.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nexon {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error hierarchy. The CLI maps each kind onto a process exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

/// Value of the sample-level ordinal covariate for one group of samples.
struct OrdinalLevel {
  int value = 0;

  friend bool operator==(OrdinalLevel, OrdinalLevel) = default;
  friend auto operator<=>(OrdinalLevel, OrdinalLevel) = default;
};

/// Dense symmetric matrix. Writes go to both triangles so the two halves can
/// never disagree.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(Eigen::Index dim) : m_(Matrix::Zero(dim, dim)) {}

  // Throws unless `m` is square and exactly symmetric.
  explicit SymmetricMatrix(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw DataError("SymmetricMatrix: matrix is not square");
    for (Eigen::Index j = 0; j < m_.cols(); ++j)
      for (Eigen::Index i = j + 1; i < m_.rows(); ++i)
        if (m_(i, j) != m_(j, i))
          throw DataError("SymmetricMatrix: matrix is not symmetric at (" +
                          std::to_string(i) + ", " + std::to_string(j) + ")");
  }

  static SymmetricMatrix identity(Eigen::Index dim) {
    return SymmetricMatrix(Matrix::Identity(dim, dim));
  }

  // Copies the upper triangle onto the lower one.
  static SymmetricMatrix from_upper(const Matrix& m) {
    Matrix out = m.triangularView<Eigen::Upper>();
    out.triangularView<Eigen::StrictlyLower>() = out.transpose();
    return SymmetricMatrix(std::move(out));
  }

  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  void set(Eigen::Index i, Eigen::Index j, double v) {
    m_(i, j) = v;
    m_(j, i) = v;
  }
  const Matrix& dense() const { return m_; }

 private:
  Matrix m_;
};

/// Undirected simple graph over nodes 0..P-1, stored as canonical pairs i < j.
class EdgeSet {
 public:
  using Edge = std::pair<int, int>;
  using const_iterator = std::set<Edge>::const_iterator;

  EdgeSet() = default;

  void insert(int i, int j) {
    if (i == j) throw DataError("EdgeSet: self-loop on node " + std::to_string(i));
    if (i > j) std::swap(i, j);
    edges_.emplace(i, j);
  }
  void erase(int i, int j) {
    if (i > j) std::swap(i, j);
    edges_.erase({i, j});
  }
  bool contains(int i, int j) const {
    if (i > j) std::swap(i, j);
    return edges_.count({i, j}) > 0;
  }
  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  const_iterator begin() const { return edges_.begin(); }
  const_iterator end() const { return edges_.end(); }

  friend bool operator==(const EdgeSet&, const EdgeSet&) = default;

 private:
  std::set<Edge> edges_;
};

inline EdgeSet set_union(const EdgeSet& a, const EdgeSet& b) {
  EdgeSet out = a;
  for (auto [i, j] : b) out.insert(i, j);
  return out;
}

inline EdgeSet set_intersection(const EdgeSet& a, const EdgeSet& b) {
  EdgeSet out;
  for (auto [i, j] : a)
    if (b.contains(i, j)) out.insert(i, j);
  return out;
}

inline std::size_t edge_count(int p) {
  return static_cast<std::size_t>(p) * static_cast<std::size_t>(p - 1) / 2;
}

/// One covariate group: its level and an N_a x P data matrix.
struct Group {
  OrdinalLevel level;
  Matrix data;
};

/// Samples split by ordinal covariate level, groups in the caller's order.
struct GroupedDataset {
  std::vector<Group> groups;
  std::vector<std::string> variable_names;  // empty or one per column

  Eigen::Index num_variables() const {
    return groups.empty() ? 0 : groups.front().data.cols();
  }
  std::size_t num_levels() const { return groups.size(); }

  std::vector<double> level_values() const {
    std::vector<double> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(static_cast<double>(g.level.value));
    return out;
  }

  // Checks shape invariants: common column count, N_a >= 2, distinct levels.
  void validate() const {
    if (groups.empty()) throw DataError("dataset has no groups");
    const auto p = groups.front().data.cols();
    if (p < 2) throw DataError("dataset needs at least 2 variables");
    std::set<int> seen;
    for (const auto& g : groups) {
      if (g.data.cols() != p)
        throw DataError("group at level " + std::to_string(g.level.value) + " has " +
                        std::to_string(g.data.cols()) + " columns, expected " +
                        std::to_string(p));
      if (g.data.rows() < 2)
        throw DataError("group at level " + std::to_string(g.level.value) +
                        " has fewer than 2 samples");
      if (!seen.insert(g.level.value).second)
        throw DataError("duplicate level " + std::to_string(g.level.value));
    }
    if (!variable_names.empty() && static_cast<Eigen::Index>(variable_names.size()) != p)
      throw DataError("variable_names length does not match column count");
  }
};

/// Subtracts column means; with `scale` also divides by the sample standard
/// deviation (N - 1 denominator).
inline Matrix center_columns(const Matrix& data, bool scale = false) {
  if (data.rows() < 2) throw DataError("center_columns: need at least 2 rows");
  Matrix out = data.rowwise() - data.colwise().mean();
  if (scale) {
    const double denom = static_cast<double>(data.rows() - 1);
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double sd = std::sqrt(out.col(j).squaredNorm() / denom);
      if (!(sd > 0.0))
        throw DataError("center_columns: column " + std::to_string(j) +
                        " has zero variance and cannot be scaled");
      out.col(j) /= sd;
    }
  }
  return out;
}

inline GroupedDataset center_groups(GroupedDataset ds, bool scale = false) {
  for (auto& g : ds.groups) g.data = center_columns(g.data, scale);
  return ds;
}

/// Scatter matrix Y^T Y. Not divided by N.
inline SymmetricMatrix sample_covariance(const Matrix& data) {
  Matrix s = Matrix::Zero(data.cols(), data.cols());
  s.selfadjointView<Eigen::Lower>().rankUpdate(data.transpose());
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return SymmetricMatrix(std::move(s));
}

inline bool is_positive_definite(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return false;
  return (llt.matrixLLT().diagonal().array() > 0.0).all();
}

inline bool is_positive_definite(const SymmetricMatrix& m) {
  return is_positive_definite(m.dense());
}

/// Off-diagonal rho_ij = -w_ij / sqrt(w_ii w_jj); unit diagonal.
inline SymmetricMatrix partial_correlations(const SymmetricMatrix& omega) {
  const auto p = omega.dim();
  Vector inv_sd(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double d = omega(i, i);
    if (!(d > 0.0))
      throw DataError("partial_correlations: diagonal entry " + std::to_string(i) +
                      " is not strictly positive");
    inv_sd(i) = 1.0 / std::sqrt(d);
  }
  SymmetricMatrix rho(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    rho.set(i, i, 1.0);
    for (Eigen::Index j = i + 1; j < p; ++j)
      rho.set(i, j, -omega(i, j) * inv_sd(i) * inv_sd(j));
  }
  return rho;
}

/// Edges whose absolute off-diagonal value exceeds `tol`.
inline EdgeSet support(const Matrix& m, double tol) {
  EdgeSet out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j)) > tol) out.insert(static_cast<int>(i), static_cast<int>(j));
  return out;
}

inline double log_det_spd(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("log determinant requested for a matrix that is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace nexon
