#include "zorank/rank_grad.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

namespace zorank {

PerturbationBatch::PerturbationBatch(Vector base_point, double mu, std::vector<Vector> directions)
    : base_(std::move(base_point)), mu_(mu), directions_(std::move(directions)) {
  if (base_.empty()) throw std::invalid_argument("PerturbationBatch: empty base point");
  if (!(mu_ > 0.0) || !std::isfinite(mu_)) {
    throw std::invalid_argument("PerturbationBatch: mu must be positive and finite");
  }
  if (directions_.size() < 2) {
    throw std::invalid_argument("PerturbationBatch: need at least 2 directions");
  }
  candidates_.reserve(directions_.size());
  for (const Vector& xi : directions_) {
    require_same_dim(base_, xi, "PerturbationBatch");
    Vector c = base_;
    axpy(mu_, xi, c);
    candidates_.push_back(std::move(c));
  }
}

PerturbationBatch sample_perturbations(const Vector& base_point, std::size_t m, double mu,
                                       Rng& rng) {
  if (m < 2) throw std::invalid_argument("sample_perturbations: m must be >= 2");
  if (!(mu > 0.0)) throw std::invalid_argument("sample_perturbations: mu must be > 0");
  if (base_point.empty()) throw std::invalid_argument("sample_perturbations: empty base point");
  std::vector<Vector> directions;
  directions.reserve(m);
  for (std::size_t i = 0; i < m; ++i) directions.push_back(rng.normal_vector(base_point.size()));
  return PerturbationBatch(base_point, mu, std::move(directions));
}

RankingOutcome::RankingOutcome(std::size_t m, std::vector<std::size_t> ordered_best)
    : m_(m), order_(std::move(ordered_best)) {
  if (m_ < 1) throw std::invalid_argument("RankingOutcome: m must be >= 1");
  if (order_.empty() || order_.size() > m_) {
    throw std::invalid_argument("RankingOutcome: need 1 <= k <= m ranked indices, got " +
                                std::to_string(order_.size()));
  }
  std::vector<bool> seen(m_, false);
  for (std::size_t idx : order_) {
    if (idx >= m_) {
      throw std::invalid_argument("RankingOutcome: index " + std::to_string(idx + 1) +
                                  " out of range 1.." + std::to_string(m_));
    }
    if (seen[idx]) {
      throw std::invalid_argument("RankingOutcome: duplicate index " + std::to_string(idx + 1));
    }
    seen[idx] = true;
  }
}

RankingOutcome RankingOutcome::from_one_based(std::size_t m,
                                              std::span<const std::int64_t> ordered_best) {
  std::vector<std::size_t> order;
  order.reserve(ordered_best.size());
  for (std::int64_t idx : ordered_best) {
    if (idx < 1 || static_cast<std::size_t>(idx) > m) {
      throw std::invalid_argument("RankingOutcome: index " + std::to_string(idx) +
                                  " out of range 1.." + std::to_string(m));
    }
    order.push_back(static_cast<std::size_t>(idx - 1));
  }
  return RankingOutcome(m, std::move(order));
}

RankingOutcome RankingOutcome::from_one_based(std::size_t m,
                                              std::initializer_list<std::int64_t> ordered_best) {
  return from_one_based(m, std::span<const std::int64_t>(ordered_best.begin(), ordered_best.size()));
}

std::vector<std::int64_t> RankingOutcome::one_based() const {
  std::vector<std::int64_t> out;
  out.reserve(order_.size());
  for (std::size_t idx : order_) out.push_back(static_cast<std::int64_t>(idx) + 1);
  return out;
}

std::vector<int> ComparisonDag::in_degree() const {
  std::vector<int> deg(node_count, 0);
  for (const auto& [from, to] : edges) ++deg[to];
  return deg;
}

std::vector<int> ComparisonDag::out_degree() const {
  std::vector<int> deg(node_count, 0);
  for (const auto& [from, to] : edges) ++deg[from];
  return deg;
}

bool ComparisonDag::is_acyclic() const {
  std::vector<std::vector<std::size_t>> succ(node_count);
  for (const auto& [from, to] : edges) {
    if (from >= node_count || to >= node_count) return false;
    succ[from].push_back(to);
  }
  std::vector<int> indeg = in_degree();
  std::deque<std::size_t> ready;
  for (std::size_t v = 0; v < node_count; ++v) {
    if (indeg[v] == 0) ready.push_back(v);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    const std::size_t v = ready.front();
    ready.pop_front();
    ++visited;
    for (std::size_t w : succ[v]) {
      if (--indeg[w] == 0) ready.push_back(w);
    }
  }
  return visited == node_count;
}

ComparisonDag build_dag(const RankingOutcome& outcome) {
  const std::size_t m = outcome.m();
  const auto& ranked = outcome.ordered_best();
  ComparisonDag dag;
  dag.node_count = m;
  std::vector<bool> is_ranked(m, false);
  for (std::size_t idx : ranked) is_ranked[idx] = true;

  dag.edges.reserve(static_cast<std::size_t>(edge_count(static_cast<std::int64_t>(m),
                                                        static_cast<std::int64_t>(ranked.size()))));
  for (std::size_t a = 0; a < ranked.size(); ++a) {
    for (std::size_t b = a + 1; b < ranked.size(); ++b) dag.edges.emplace_back(ranked[a], ranked[b]);
    for (std::size_t q = 0; q < m; ++q) {
      if (!is_ranked[q]) dag.edges.emplace_back(ranked[a], q);
    }
  }
  return dag;
}

namespace {

void check_mk(std::int64_t m, std::int64_t k, const char* what) {
  if (k < 1 || k > m) {
    throw std::invalid_argument(std::string(what) + ": need 1 <= k <= m, got m=" +
                                std::to_string(m) + " k=" + std::to_string(k));
  }
}

}  // namespace

std::int64_t edge_count(std::int64_t m, std::int64_t k) {
  check_mk(m, k, "edge_count");
  return k * m - (k * k + k) / 2;
}

std::int64_t neighbor_pair_count(std::int64_t m, std::int64_t k) {
  check_mk(m, k, "neighbor_pair_count");
  return m * m * k + m * k * k - k * k * k + k * k - 4 * m * k + 2 * k;
}

std::vector<double> rank_weights(const RankingOutcome& outcome) {
  const auto m = static_cast<double>(outcome.m());
  const auto k = static_cast<double>(outcome.k());
  std::vector<double> w(outcome.m(), k);
  const auto& ranked = outcome.ordered_best();
  for (std::size_t j = 0; j < ranked.size(); ++j) {
    w[ranked[j]] = 2.0 * static_cast<double>(j + 1) - m - 1.0;
  }
  return w;
}

GradientEstimate estimate_gradient(std::span<const Vector> directions,
                                   const RankingOutcome& outcome) {
  if (directions.size() != outcome.m()) {
    throw std::invalid_argument("estimate_gradient: outcome has m=" + std::to_string(outcome.m()) +
                                " but batch has " + std::to_string(directions.size()) +
                                " directions");
  }
  const std::size_t d = directions.front().size();
  GradientEstimate est;
  est.weights = rank_weights(outcome);
  est.edge_count =
      edge_count(static_cast<std::int64_t>(outcome.m()), static_cast<std::int64_t>(outcome.k()));
  est.vector.assign(d, 0.0);
  for (std::size_t i = 0; i < directions.size(); ++i) {
    require_same_dim(est.vector, directions[i], "estimate_gradient");
    if (est.weights[i] != 0.0) axpy(est.weights[i], directions[i], est.vector);
  }
  const auto edges = static_cast<double>(est.edge_count);
  for (double& v : est.vector) v /= edges;
  return est;
}

GradientEstimate estimate_gradient(const PerturbationBatch& batch, const RankingOutcome& outcome) {
  return estimate_gradient(std::span<const Vector>(batch.directions()), outcome);
}

Vector pairwise_estimate(int f_sign, std::span<const double> xi1, std::span<const double> xi2) {
  if (f_sign != 1 && f_sign != -1) throw std::invalid_argument("pairwise_estimate: sign must be +1 or -1");
  Vector out = subtract(xi1, xi2);
  if (f_sign < 0) {
    for (double& v : out) v = -v;
  }
  return out;
}

}  // namespace zorank
