#pragma once

// Reference implementations used only by tests. They derive everything from
// first principles (pairwise order relation of a ranking) and share no code
// with the production paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "zorank/rank_grad.hpp"
#include "zorank/rng.hpp"

namespace zorank::testing {

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/// Every ordered pair (a, b) such that the ranking places a strictly ahead
/// of b. Unranked candidates share the last place.
inline EdgeList brute_force_edges(const RankingOutcome& outcome) {
  const std::size_t m = outcome.m();
  std::vector<std::size_t> place(m, std::numeric_limits<std::size_t>::max());
  for (std::size_t j = 0; j < outcome.ordered_best().size(); ++j) place[outcome.ordered_best()[j]] = j;
  EdgeList edges;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      if (a != b && place[a] < place[b]) edges.emplace_back(a, b);
    }
  }
  return edges;
}

/// |{((i,j),(i',j)) in Ebar x Ebar : i != i'}| by direct enumeration.
inline std::int64_t brute_force_neighbor_pairs(const EdgeList& edges) {
  std::set<std::pair<std::size_t, std::size_t>> undirected;
  for (const auto& [a, b] : edges) {
    undirected.emplace(a, b);
    undirected.emplace(b, a);
  }
  std::int64_t count = 0;
  for (const auto& [i, j] : undirected) {
    for (const auto& [i2, j2] : undirected) {
      if (j == j2 && i != i2) ++count;
    }
  }
  return count;
}

/// (1/|E|) sum over edges of (xi_j - xi_i), accumulated edge by edge.
inline Vector edge_sum_estimate(const std::vector<Vector>& directions, const EdgeList& edges) {
  Vector out(directions.front().size(), 0.0);
  for (const auto& [i, j] : edges) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += directions[j][c] - directions[i][c];
  }
  for (double& v : out) v /= static_cast<double>(edges.size());
  return out;
}

inline std::vector<double> brute_force_weights(std::size_t m, const EdgeList& edges) {
  std::vector<double> w(m, 0.0);
  for (const auto& [i, j] : edges) {
    w[j] += 1.0;  // in-degree
    w[i] -= 1.0;  // out-degree
  }
  return w;
}

/// Uniformly random (m, k) outcome.
inline RankingOutcome random_outcome(std::size_t m, std::size_t k, Rng& rng) {
  std::vector<std::size_t> perm(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = i;
  for (std::size_t i = m - 1; i > 0; --i) {
    const std::size_t j = rng.next_u64() % (i + 1);
    std::swap(perm[i], perm[j]);
  }
  perm.resize(k);
  return RankingOutcome(m, perm);
}

inline double max_relative_error(const Vector& a, const Vector& b) {
  double scale = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max(scale, std::abs(b[i]));
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  return scale == 0.0 ? diff : diff / scale;
}

}  // namespace zorank::testing
