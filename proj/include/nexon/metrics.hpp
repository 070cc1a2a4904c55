#pragma once

// Edge-recovery metrics and covariate-dependence summaries computed from
// fitted PPI and beta matrices.

#include "nexon/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace nexon {

/// Mann-Whitney AUC over the upper triangle: the probability that a true edge
/// outscores a non-edge, ties counted as one half.
inline double roc_auc(const Matrix& scores, const EdgeSet& truth) {
  const auto P = scores.rows();
  const auto total = edge_count(static_cast<int>(P));
  if (truth.empty() || truth.size() >= total)
    throw DataError("roc_auc: truth must contain at least one edge and one non-edge");

  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(total);
  for (Eigen::Index i = 0; i < P; ++i)
    for (Eigen::Index j = i + 1; j < P; ++j)
      items.push_back({scores(i, j), truth.contains(static_cast<int>(i), static_cast<int>(j))});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });

  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  std::size_t k = 0;
  while (k < items.size()) {
    std::size_t end = k;
    std::size_t pos_in_block = 0;
    while (end < items.size() && items[end].score == items[k].score) {
      pos_in_block += items[end].positive ? 1 : 0;
      ++end;
    }
    const double midrank = 0.5 * static_cast<double>(k + 1 + end);
    rank_sum += midrank * static_cast<double>(pos_in_block);
    k = end;
  }
  const double n_pos = static_cast<double>(truth.size());
  const double n_neg = static_cast<double>(total) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct PrecisionRecall {
  double precision;
  double recall;
  std::size_t predicted;
  std::size_t true_positives;
};

/// Edges with ppi >= threshold are predicted. Precision is 1 when nothing is
/// predicted; recall is 0 when the truth is empty and nothing matches.
inline PrecisionRecall precision_recall(const Matrix& ppi, const EdgeSet& truth,
                                        double threshold = 0.5) {
  const auto P = ppi.rows();
  std::size_t tp = 0, predicted = 0;
  for (Eigen::Index i = 0; i < P; ++i)
    for (Eigen::Index j = i + 1; j < P; ++j)
      if (ppi(i, j) >= threshold) {
        ++predicted;
        if (truth.contains(static_cast<int>(i), static_cast<int>(j))) ++tp;
      }
  PrecisionRecall out{};
  out.predicted = predicted;
  out.true_positives = tp;
  out.precision = predicted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted);
  out.recall = truth.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
  return out;
}

struct LevelMetrics {
  int level;
  double auc;
  double precision;
  double recall;
  std::size_t n_edges_est;
  std::size_t n_edges_true;
};

struct MetricsReport {
  std::vector<LevelMetrics> per_level;
};

inline MetricsReport evaluate_levels(const std::vector<int>& levels, const std::vector<Matrix>& ppi,
                                     const std::vector<EdgeSet>& truth, double threshold = 0.5) {
  if (levels.size() != ppi.size() || levels.size() != truth.size())
    throw DataError("evaluate: level, ppi and truth counts differ");
  MetricsReport r;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const auto pr = precision_recall(ppi[k], truth[k], threshold);
    r.per_level.push_back({levels[k], roc_auc(ppi[k], truth[k]), pr.precision, pr.recall,
                           pr.predicted, truth[k].size()});
  }
  return r;
}

struct SignedEdgeSets {
  EdgeSet positive;
  EdgeSet negative;
};

namespace detail {

struct WeightedEdge {
  double value;
  int i;
  int j;
};

inline std::vector<WeightedEdge> upper_entries(const Matrix& m) {
  std::vector<WeightedEdge> out;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      out.push_back({m(i, j), static_cast<int>(i), static_cast<int>(j)});
  return out;
}

// Descending by value, ties by (i, j) ascending.
inline void sort_desc(std::vector<WeightedEdge>& v) {
  std::stable_sort(v.begin(), v.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    return a.value > b.value;
  });
}

}  // namespace detail

/// Top-k edges by beta_mean form the positive set, bottom-k the negative set.
/// Throws if the two selections overlap.
inline SignedEdgeSets beta_sign_structure(const Matrix& beta_mean, std::size_t k) {
  auto entries = detail::upper_entries(beta_mean);
  if (k > entries.size()) throw DataError("beta_sign_structure: k exceeds the number of edges");
  detail::sort_desc(entries);
  SignedEdgeSets out;
  for (std::size_t r = 0; r < k; ++r) out.positive.insert(entries[r].i, entries[r].j);
  for (std::size_t r = 0; r < k; ++r) {
    const auto& e = entries[entries.size() - 1 - r];
    if (out.positive.contains(e.i, e.j))
      throw DataError("beta_sign_structure: positive and negative selections overlap; reduce k");
    out.negative.insert(e.i, e.j);
  }
  return out;
}

/// Like beta_sign_structure, but each side keeps only strictly signed
/// entries: the positive set holds at most k edges with beta > 0, the
/// negative set at most k with beta < 0.
inline SignedEdgeSets top_k_edge_subnetworks(const Matrix& beta_mean, std::size_t k = 50) {
  auto entries = detail::upper_entries(beta_mean);
  detail::sort_desc(entries);
  SignedEdgeSets out;
  for (std::size_t r = 0; r < entries.size() && out.positive.size() < k; ++r) {
    if (!(entries[r].value > 0.0)) break;
    out.positive.insert(entries[r].i, entries[r].j);
  }
  for (std::size_t r = 0; r < entries.size() && out.negative.size() < k; ++r) {
    const auto& e = entries[entries.size() - 1 - r];
    if (!(e.value < 0.0)) break;
    out.negative.insert(e.i, e.j);
  }
  return out;
}

struct NodeScore {
  int node;
  double score;
};

/// Node score = sum of |beta_mean| over incident edges in `edge_filter`,
/// sorted descending with ties by node index.
inline std::vector<NodeScore> rank_nodes_by_beta(const Matrix& beta_mean, const EdgeSet& edge_filter) {
  const auto P = static_cast<int>(beta_mean.rows());
  std::vector<NodeScore> out(P);
  for (int v = 0; v < P; ++v) out[v] = {v, 0.0};
  for (auto [i, j] : edge_filter) {
    const double w = std::abs(beta_mean(i, j));
    out[i].score += w;
    out[j].score += w;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const NodeScore& a, const NodeScore& b) { return a.score > b.score; });
  return out;
}

}  // namespace nexon
