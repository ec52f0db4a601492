#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "zorank/oracles.hpp"
#include "zorank/rng.hpp"
#include "zorank/vector_ops.hpp"

namespace zorank {

using GradientFn = std::function<Vector(std::span<const double>)>;

/// Monte Carlo estimate of a metric at a fixed location. The metrics M1/M2
/// are defined as maxima over x; an estimate at one x is a lower bound of
/// that maximum, and the per-x upper bounds are what the checks assert.
struct MetricEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::int64_t n_samples = 0;
  Vector location;
  double mu = 0.0;
};

inline constexpr std::int64_t kMinMetricSamples = 1000;
inline constexpr std::int64_t kDefaultMetricSamples = 200000;
inline constexpr std::int64_t kDefaultMomentSamples = 10000;

/// ||mean of S(x,xi1,xi2,mu) (xi1 - xi2)||^2 over n pairs; jackknife SE.
MetricEstimate estimate_m1(const Objective& f, const Vector& x, double mu, std::int64_t n, Rng& rng);

/// Mean of S(x,xi1,xi2,mu) S(x,xi1,xi3,mu) <xi1 - xi2, xi1 - xi3> over n triples.
MetricEstimate estimate_m2(const Objective& f, const Vector& x, double mu, std::int64_t n, Rng& rng);

/// 2d/|E| + (N(E)/|E|^2) m2 + m1.
double second_moment_bound(std::int64_t m, std::int64_t k, std::int64_t d, double m1, double m2);

/// Mean of ||g~(x)||^2 over n batches ranked by an exact (m,k) oracle.
MetricEstimate empirical_second_moment(const Objective& f, const Vector& x, double mu, std::size_t m,
                                       std::size_t k, std::int64_t n, Rng& rng);

/// Mean of <grad f(x), S (xi1 - xi2)> over n pairs.
MetricEstimate descent_inner_product(const Objective& f, const GradientFn& grad, const Vector& x,
                                     double mu, std::int64_t n, Rng& rng);

struct BoundCheck {
  std::string metric;
  double estimate = 0.0;
  double standard_error = 0.0;
  double bound = 0.0;
  /// Slack added to the bound, in standard errors.
  double slack_se = 3.0;
  bool passed() const { return estimate <= bound + slack_se * standard_error; }
};

/// One JSON object per line: metric, estimate, se, bound, pass.
std::string report_line(const BoundCheck& check);

}  // namespace zorank
