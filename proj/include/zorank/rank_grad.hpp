#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "zorank/rng.hpp"
#include "zorank/vector_ops.hpp"

namespace zorank {

// Index convention: every C++ API in this library addresses candidates by
// 0-based position. The oracle notation (candidates numbered 1..m) only
// appears at external boundaries: RankingOutcome::from_one_based /
// one_based(), the CLI, and the JSON wire formats.

/// Base point, smoothing radius and m standard-normal directions. Candidates
/// are derived from the directions at construction and never stored apart
/// from them.
class PerturbationBatch {
public:
  PerturbationBatch(Vector base_point, double mu, std::vector<Vector> directions);

  const Vector& base_point() const { return base_; }
  double mu() const { return mu_; }
  std::size_t size() const { return directions_.size(); }
  std::size_t dim() const { return base_.size(); }
  const std::vector<Vector>& directions() const { return directions_; }
  const std::vector<Vector>& candidates() const { return candidates_; }

private:
  Vector base_;
  double mu_;
  std::vector<Vector> directions_;
  std::vector<Vector> candidates_;
};

PerturbationBatch sample_perturbations(const Vector& base_point, std::size_t m, double mu,
                                       Rng& rng);

/// Ordered positions of the k best candidates out of m, best first.
class RankingOutcome {
public:
  /// `ordered_best` holds 0-based positions.
  RankingOutcome(std::size_t m, std::vector<std::size_t> ordered_best);

  /// Oracle notation: indices in 1..m.
  static RankingOutcome from_one_based(std::size_t m, std::span<const std::int64_t> ordered_best);
  static RankingOutcome from_one_based(std::size_t m, std::initializer_list<std::int64_t> ordered_best);

  std::size_t m() const { return m_; }
  std::size_t k() const { return order_.size(); }
  const std::vector<std::size_t>& ordered_best() const { return order_; }
  std::size_t best() const { return order_.front(); }
  std::vector<std::int64_t> one_based() const;

  bool operator==(const RankingOutcome&) const = default;

private:
  std::size_t m_;
  std::vector<std::size_t> order_;
};

/// Edge (i, j) asserts that candidate i is better (smaller f) than j.
struct ComparisonDag {
  std::size_t node_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;

  /// Kahn's algorithm; true iff every node can be topologically ordered.
  bool is_acyclic() const;
  std::vector<int> in_degree() const;
  std::vector<int> out_degree() const;
};

ComparisonDag build_dag(const RankingOutcome& outcome);

/// |E| = km - (k^2 + k)/2 for an (m,k) outcome.
std::int64_t edge_count(std::int64_t m, std::int64_t k);

/// Ordered pairs of distinct undirected edges sharing an endpoint:
/// m^2 k + m k^2 - k^3 + k^2 - 4mk + 2k.
std::int64_t neighbor_pair_count(std::int64_t m, std::int64_t k);

/// Per-candidate coefficient deg_in - deg_out in the comparison DAG. The
/// j-th ranked candidate (1-based j) gets 2j - m - 1, unranked ones get k.
std::vector<double> rank_weights(const RankingOutcome& outcome);

struct GradientEstimate {
  Vector vector;
  std::int64_t edge_count = 0;
  std::vector<double> weights;
};

/// Mean of (xi_j - xi_i) over DAG edges, evaluated as
/// (1/|E|) * sum_i w_i xi_i. The result points uphill; optimizers subtract it.
GradientEstimate estimate_gradient(const PerturbationBatch& batch, const RankingOutcome& outcome);

/// Same estimator from raw directions (used when no batch object exists).
GradientEstimate estimate_gradient(std::span<const Vector> directions, const RankingOutcome& outcome);

/// Sign convention for comparisons: +1 when value >= 0, else -1.
inline int comparison_sign(double value) { return value >= 0.0 ? 1 : -1; }

/// f_sign * (xi1 - xi2) with f_sign = Sign(f(x + mu xi1) - f(x + mu xi2)).
Vector pairwise_estimate(int f_sign, std::span<const double> xi1, std::span<const double> xi2);

}  // namespace zorank
