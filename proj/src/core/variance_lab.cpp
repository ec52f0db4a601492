#include "zorank/variance_lab.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

#include <json.hpp>

#include "zorank/rank_grad.hpp"

namespace zorank {

namespace {

// Samples are drawn in fixed-size chunks, chunk c from base.split(c). Chunk
// results are folded in chunk order, so estimates depend on the seed only,
// never on the thread count.
constexpr std::int64_t kChunk = 4096;

struct Chunking {
  std::int64_t n;
  std::int64_t chunks;
  std::int64_t begin(std::int64_t c) const { return c * kChunk; }
  std::int64_t end(std::int64_t c) const { return std::min(n, (c + 1) * kChunk); }
};

template <typename Work>
void for_each_chunk(std::int64_t chunks, Work&& work) {
  const auto hw = static_cast<std::int64_t>(std::max(1u, std::thread::hardware_concurrency()));
  const std::int64_t workers = std::min(hw, chunks);
  if (workers <= 1) {
    for (std::int64_t c = 0; c < chunks; ++c) work(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (std::int64_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t c = w; c < chunks; c += workers) work(c);
    });
  }
  for (auto& t : pool) t.join();
}

struct Moments {
  std::int64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0) return;
    const double total = static_cast<double>(count + o.count);
    const double delta = o.mean - mean;
    mean += delta * static_cast<double>(o.count) / total;
    m2 += o.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(o.count) / total;
    count += o.count;
  }

  double standard_error() const {
    if (count < 2) return 0.0;
    const double var = m2 / static_cast<double>(count - 1);
    return std::sqrt(var / static_cast<double>(count));
  }
};

void check_inputs(const Vector& x, double mu, std::int64_t n, const char* what) {
  if (x.empty()) throw std::invalid_argument(std::string(what) + ": empty location");
  if (!(mu > 0.0)) throw std::invalid_argument(std::string(what) + ": mu must be > 0");
  if (n < kMinMetricSamples) {
    throw std::invalid_argument(std::string(what) + ": need at least " +
                                std::to_string(kMinMetricSamples) + " samples");
  }
}

double evaluate(const Objective& f, const Vector& x, double mu, const Vector& xi, Vector& scratch) {
  for (std::size_t i = 0; i < x.size(); ++i) scratch[i] = x[i] + mu * xi[i];
  const double v = f(scratch);
  if (!std::isfinite(v)) throw EvaluationError(0, v);
  return v;
}

/// Writes S (xi1 - xi2) into out.
void signed_difference(const Objective& f, const Vector& x, double mu, Rng& rng, Vector& xi1,
                       Vector& xi2, Vector& scratch, Vector& out) {
  rng.fill_normal(xi1);
  rng.fill_normal(xi2);
  const int s = comparison_sign(evaluate(f, x, mu, xi1, scratch) - evaluate(f, x, mu, xi2, scratch));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * (xi1[i] - xi2[i]);
}

MetricEstimate make_estimate(double value, double se, std::int64_t n, const Vector& x, double mu) {
  return MetricEstimate{value, se, n, x, mu};
}

}  // namespace

MetricEstimate estimate_m1(const Objective& f, const Vector& x, double mu, std::int64_t n, Rng& rng) {
  check_inputs(x, mu, n, "estimate_m1");
  const std::size_t d = x.size();
  const Rng base(rng.next_u64());
  const Chunking chunking{n, (n + kChunk - 1) / kChunk};

  // Pass 1: sample mean of v = S (xi1 - xi2).
  std::vector<Vector> partial(static_cast<std::size_t>(chunking.chunks), Vector(d, 0.0));
  for_each_chunk(chunking.chunks, [&](std::int64_t c) {
    Rng local = base.split(static_cast<std::uint64_t>(c));
    Vector xi1(d), xi2(d), scratch(d), v(d);
    Vector& acc = partial[static_cast<std::size_t>(c)];
    for (std::int64_t s = chunking.begin(c); s < chunking.end(c); ++s) {
      signed_difference(f, x, mu, local, xi1, xi2, scratch, v);
      axpy(1.0, v, acc);
    }
  });
  Vector mean(d, 0.0);
  for (const Vector& p : partial) axpy(1.0, p, mean);
  const double nn = static_cast<double>(n);
  for (double& v : mean) v /= nn;
  const double value = squared_norm(mean);

  // Pass 2 regenerates the same samples for the jackknife. With u = v - mean,
  // the leave-one-out statistic differs from the full one by
  // -2<mean,u>/(n-1) + ||u||^2/(n-1)^2.
  std::vector<Moments> jack(static_cast<std::size_t>(chunking.chunks));
  for_each_chunk(chunking.chunks, [&](std::int64_t c) {
    Rng local = base.split(static_cast<std::uint64_t>(c));
    Vector xi1(d), xi2(d), scratch(d), v(d);
    Moments& acc = jack[static_cast<std::size_t>(c)];
    for (std::int64_t s = chunking.begin(c); s < chunking.end(c); ++s) {
      signed_difference(f, x, mu, local, xi1, xi2, scratch, v);
      double proj = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double u = v[i] - mean[i];
        proj += mean[i] * u;
        sq += u * u;
      }
      acc.add(-2.0 * proj / (nn - 1.0) + sq / ((nn - 1.0) * (nn - 1.0)));
    }
  });
  Moments total;
  for (const Moments& m : jack) total.merge(m);
  const double jack_var = (nn - 1.0) / nn * total.m2;
  return make_estimate(value, std::sqrt(jack_var), n, x, mu);
}

MetricEstimate estimate_m2(const Objective& f, const Vector& x, double mu, std::int64_t n, Rng& rng) {
  check_inputs(x, mu, n, "estimate_m2");
  const std::size_t d = x.size();
  const Rng base(rng.next_u64());
  const Chunking chunking{n, (n + kChunk - 1) / kChunk};
  std::vector<Moments> partial(static_cast<std::size_t>(chunking.chunks));
  for_each_chunk(chunking.chunks, [&](std::int64_t c) {
    Rng local = base.split(static_cast<std::uint64_t>(c));
    Vector xi1(d), xi2(d), xi3(d), scratch(d);
    Moments& acc = partial[static_cast<std::size_t>(c)];
    for (std::int64_t s = chunking.begin(c); s < chunking.end(c); ++s) {
      local.fill_normal(xi1);
      local.fill_normal(xi2);
      local.fill_normal(xi3);
      const double f1 = evaluate(f, x, mu, xi1, scratch);
      const double f2 = evaluate(f, x, mu, xi2, scratch);
      const double f3 = evaluate(f, x, mu, xi3, scratch);
      const int s12 = comparison_sign(f1 - f2);
      const int s13 = comparison_sign(f1 - f3);
      double inner = 0.0;
      for (std::size_t i = 0; i < d; ++i) inner += (xi1[i] - xi2[i]) * (xi1[i] - xi3[i]);
      acc.add(s12 * s13 * inner);
    }
  });
  Moments total;
  for (const Moments& m : partial) total.merge(m);
  return make_estimate(total.mean, total.standard_error(), n, x, mu);
}

double second_moment_bound(std::int64_t m, std::int64_t k, std::int64_t d, double m1, double m2) {
  if (d < 1) throw std::invalid_argument("second_moment_bound: d must be >= 1");
  if (m1 < 0.0 || m2 < 0.0) throw std::invalid_argument("second_moment_bound: metrics must be >= 0");
  const auto edges = static_cast<double>(edge_count(m, k));
  const auto pairs = static_cast<double>(neighbor_pair_count(m, k));
  return 2.0 * static_cast<double>(d) / edges + pairs / (edges * edges) * m2 + m1;
}

MetricEstimate empirical_second_moment(const Objective& f, const Vector& x, double mu, std::size_t m,
                                       std::size_t k, std::int64_t n, Rng& rng) {
  check_inputs(x, mu, n, "empirical_second_moment");
  if (m < 2 || k < 1 || k > m) throw std::invalid_argument("empirical_second_moment: need 1 <= k <= m, m >= 2");
  const Rng base(rng.next_u64());
  const Chunking chunking{n, (n + kChunk - 1) / kChunk};
  std::vector<Moments> partial(static_cast<std::size_t>(chunking.chunks));
  for_each_chunk(chunking.chunks, [&](std::int64_t c) {
    Rng local = base.split(static_cast<std::uint64_t>(c));
    Moments& acc = partial[static_cast<std::size_t>(c)];
    for (std::int64_t s = chunking.begin(c); s < chunking.end(c); ++s) {
      const PerturbationBatch batch = sample_perturbations(x, m, mu, local);
      OracleRequest request{batch.candidates(), k, {}};
      const RankingOutcome outcome = exact_rank(f, request);
      acc.add(squared_norm(estimate_gradient(batch, outcome).vector));
    }
  });
  Moments total;
  for (const Moments& mm : partial) total.merge(mm);
  return make_estimate(total.mean, total.standard_error(), n, x, mu);
}

MetricEstimate descent_inner_product(const Objective& f, const GradientFn& grad, const Vector& x,
                                     double mu, std::int64_t n, Rng& rng) {
  check_inputs(x, mu, n, "descent_inner_product");
  const std::size_t d = x.size();
  const Vector g = grad(x);
  require_same_dim(x, g, "descent_inner_product");
  const Rng base(rng.next_u64());
  const Chunking chunking{n, (n + kChunk - 1) / kChunk};
  std::vector<Moments> partial(static_cast<std::size_t>(chunking.chunks));
  for_each_chunk(chunking.chunks, [&](std::int64_t c) {
    Rng local = base.split(static_cast<std::uint64_t>(c));
    Vector xi1(d), xi2(d), scratch(d), v(d);
    Moments& acc = partial[static_cast<std::size_t>(c)];
    for (std::int64_t s = chunking.begin(c); s < chunking.end(c); ++s) {
      signed_difference(f, x, mu, local, xi1, xi2, scratch, v);
      acc.add(dot(g, v));
    }
  });
  Moments total;
  for (const Moments& m : partial) total.merge(m);
  return make_estimate(total.mean, total.standard_error(), n, x, mu);
}

std::string report_line(const BoundCheck& check) {
  nlohmann::json j = {{"metric", check.metric},       {"estimate", check.estimate},
                      {"se", check.standard_error},   {"bound", check.bound},
                      {"slack_se", check.slack_se},   {"pass", check.passed()}};
  return j.dump();
}

}  // namespace zorank
