#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zorank/optimizer.hpp"
#include "zorank/variance_lab.hpp"

namespace zorank {

enum class FunctionKind { Quadratic, Rosenbrock };

/// f(x) = ||x||^2, or sum_{i<d} (1 - x_i)^2 + 100 (x_{i+1} - x_i^2)^2 with d >= 2.
class TestFunction {
public:
  TestFunction(FunctionKind kind, std::size_t dim);

  static TestFunction parse(const std::string& name, std::size_t dim);

  FunctionKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::string name() const;

  double operator()(std::span<const double> x) const;
  Vector gradient(std::span<const double> x) const;

  Objective objective() const;
  GradientFn gradient_fn() const;

  /// Default scale of the seeded standard-normal initial point.
  double default_x0_scale() const { return kind_ == FunctionKind::Quadratic ? 10.0 : 1.0; }

private:
  void check_dim(std::span<const double> x) const;
  FunctionKind kind_;
  std::size_t dim_;
};

double eval_function(const TestFunction& fn, std::span<const double> x);
Vector grad_function(const TestFunction& fn, std::span<const double> x);

struct ExperimentSpec {
  std::string name = "experiment";
  FunctionKind function = FunctionKind::Quadratic;
  std::size_t dim = 100;
  Algorithm algorithm = Algorithm::ZoRankSgd;
  OptimizerConfig config;
  double noise_sigma = 0.0;
  std::vector<std::uint64_t> seeds;
  std::optional<std::int64_t> query_budget;
  std::optional<double> x0_scale;
  /// (m, k) combinations for grid studies.
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  /// Noise levels for noise sweeps.
  std::vector<double> sigmas;

  void validate() const;
  TestFunction test_function() const { return TestFunction(function, dim); }
};

/// Parses the JSON experiment format (see configs/*.json). Unknown keys are
/// rejected so typos do not silently fall back to defaults.
ExperimentSpec parse_experiment(const nlohmann::json& j);
ExperimentSpec load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentSpec& spec);

/// Built-in presets: grid-quadratic, grid-rosenbrock, compare-quadratic,
/// compare-rosenbrock, noise-quadratic, noise-rosenbrock, theorem-quadratic,
/// highdim-quadratic, highdim-rosenbrock.
ExperimentSpec preset(const std::string& name);
std::vector<std::string> preset_names();

/// Seeded pieces of one run. Stream 0 of the seed draws x0, stream 1 the
/// perturbation directions, stream 2 the oracle noise.
Vector initial_point(const ExperimentSpec& spec, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  Trajectory trajectory;
  /// Meter of the oracle wrapper(s) after the run.
  std::int64_t metered_queries = 0;
};

SeedRun run_seed(const ExperimentSpec& spec, std::uint64_t seed, bool keep_points = false);

struct AggregateRow {
  std::int64_t queries = 0;
  double mean_f = 0.0;
  double std_f = 0.0;
  std::size_t n_seeds = 0;
};

struct AggregateResult {
  std::vector<AggregateRow> rows;
  const AggregateRow& final_row() const { return rows.back(); }
};

struct ExperimentResult {
  ExperimentSpec spec;
  AggregateResult aggregate;
  std::vector<SeedRun> runs;  // surviving seeds, in seed order
  std::vector<std::string> warnings;
};

/// f along each surviving trajectory, aligned on cumulative oracle queries
/// (carrying the last value forward), up to the shortest trajectory.
AggregateResult aggregate_runs(const std::vector<SeedRun>& runs);

/// Runs every seed (in parallel when workers > 1) and folds them in seed order.
ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned workers = 0);

struct GridRow {
  std::size_t m = 0;
  std::size_t k = 0;
  std::int64_t edges = 0;
  std::int64_t neighbor_pairs = 0;
  /// N(E)/|E|^2, the weight of the correlated variance term.
  double correlation_factor = 0.0;
  /// Second-moment bound with the worst-case metrics M1 = M2 = 2d.
  double predicted_bound = 0.0;
  ExperimentResult result;
};

std::vector<GridRow> mk_grid_study(const ExperimentSpec& base,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& combos,
                                   unsigned workers = 0);

struct NoiseRow {
  double sigma = 0.0;
  ExperimentResult result;
};

std::vector<NoiseRow> noise_sweep(const ExperimentSpec& base, const std::vector<double>& sigmas,
                                  unsigned workers = 0);

/// Invariant checks the CLI enforces: query meter agreement and, for exact
/// oracles with line search, non-increasing f. Returns failure messages.
std::vector<std::string> check_invariants(const ExperimentResult& result);

void write_aggregate_csv(const std::filesystem::path& path, const AggregateResult& aggregate);
void write_outputs(const std::filesystem::path& dir, const ExperimentResult& result);
void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows);
void write_noise_csv(const std::filesystem::path& path, const std::vector<NoiseRow>& rows);

/// Shortest-round-trip decimal text of a double, used in every CSV output.
std::string format_double(double v);

}  // namespace zorank
