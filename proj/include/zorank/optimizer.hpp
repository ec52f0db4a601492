#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "zorank/oracles.hpp"
#include "zorank/rank_grad.hpp"
#include "zorank/rng.hpp"
#include "zorank/vector_ops.hpp"

namespace zorank {

struct LineSearchConfig {
  std::size_t trials = 5;  // l
  double gamma = 0.1;
};

struct OptimizerConfig {
  double eta = 1.0;
  double mu = 0.01;
  std::size_t m = 10;
  std::size_t k = 10;
  std::int64_t iterations = 100;  // T
  std::optional<LineSearchConfig> line_search;
  /// Multiplies eta and mu after every iteration.
  std::optional<double> decay;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// Step size sqrt(1/(dT)) and smoothing sqrt(d/(c_d^2 T)). The constant
  /// c_d has no closed form; callers supply a stand-in (1 is a reasonable
  /// default, which gives mu = sqrt(d/T)).
  static OptimizerConfig theorem_schedule(std::size_t dim, std::int64_t iterations, std::size_t m,
                                          std::size_t k, double c_d = 1.0);
};

struct IterationRecord {
  std::int64_t t = 0;
  Vector point_before;
  Vector point_after;
  double gradient_norm = 0.0;
  std::int64_t queries = 0;
  std::int64_t cumulative_queries = 0;
  double eta = 0.0;
  double mu = 0.0;
  std::optional<int> accepted_exponent;
  std::optional<double> f_value;  // at point_after, when the objective is known
};

struct StepResult {
  Vector point;
  IterationRecord record;
};

struct LineSearchResult {
  Vector point;
  /// Exponent p of the accepted step eta * gamma^p; empty when x itself won.
  std::optional<int> exponent;
};

/// Candidate set {x} u {x - eta gamma^p g : p = 1..l-1}, answered by an
/// (l,1)-oracle.
LineSearchResult line_search_step(const Vector& x, const Vector& g, double eta, double gamma,
                                  std::size_t trials, RankingOracle& select_oracle);

/// One ZO-RankSGD iteration on a pre-sampled batch: rank the candidates,
/// form the rank estimate, move against it, then optionally line search.
StepResult zo_rank_sgd_step(const PerturbationBatch& batch, const OptimizerConfig& config,
                            RankingOracle& oracle, RankingOracle* select_oracle = nullptr);

/// Samples config.m directions from rng around x, then as above.
StepResult zo_rank_sgd_step(const Vector& x, const OptimizerConfig& config, RankingOracle& oracle,
                            Rng& rng, RankingOracle* select_oracle = nullptr);

/// Pairwise-comparison variant on a (2,1) oracle, using the two-point
/// sign estimator directly. Coincides with zo_rank_sgd_step at m=2, k=1.
StepResult pairwise_sgd_step(const Vector& x, const OptimizerConfig& config, RankingOracle& oracle,
                             Rng& rng, RankingOracle* select_oracle = nullptr);

/// Value-oracle baseline: g = mean_i ((f(x + mu xi_i) - f(x)) / mu) xi_i over
/// m - 1 directions, so one iteration costs m value queries like a ranking
/// step of the same m.
StepResult zo_sgd_step(const Vector& x, const OptimizerConfig& config, ValueOracle& values, Rng& rng,
                       RankingOracle* select_oracle = nullptr);

/// Same baseline on explicit directions.
StepResult zo_sgd_step(const Vector& x, std::span<const Vector> directions,
                       const OptimizerConfig& config, ValueOracle& values,
                       RankingOracle* select_oracle = nullptr);

enum class Algorithm { ZoRankSgd, PairwiseSgd, ZoSgd };

const char* to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);

struct StopRule {
  std::optional<std::int64_t> max_queries;
  /// Return true to stop after the given record.
  std::function<bool(const IterationRecord&)> predicate;
};

struct Trajectory {
  Vector initial_point;
  std::optional<double> initial_f;
  Vector final_point;
  std::vector<IterationRecord> records;
  std::int64_t total_queries = 0;
  /// Set when an iteration threw; records hold everything before it.
  std::optional<std::string> error;
};

struct RunOptions {
  Algorithm algorithm = Algorithm::ZoRankSgd;
  StopRule stop;
  /// Ground-truth objective for reporting f in the records (never used to
  /// steer the run).
  Objective reporting_objective;
  /// Called after each iteration, e.g. to persist records as they happen.
  /// Always sees the full record, points included.
  std::function<void(const IterationRecord&)> on_record;
  /// When false, stored records drop point_before/point_after.
  bool keep_points = true;
};

/// Runs config.iterations steps (or until the stop rule fires) from x0.
/// `oracle` answers ranking and line-search queries; `values` is required
/// for Algorithm::ZoSgd only.
Trajectory run(const OptimizerConfig& config, RankingOracle& oracle, const Vector& x0, Rng& rng,
               const RunOptions& options = {}, ValueOracle* values = nullptr);

// Interactive variant with a best-point memory.

enum class InteractivePhase { GradientEstimation, LineSearch };

const char* to_string(InteractivePhase phase);

struct InteractiveState {
  Vector best_point;        // x*
  Vector batch_best;        // x**
  Vector gradient_memory;   // running mean of estimates since the last move
  std::int64_t tau = 0;
  InteractivePhase phase = InteractivePhase::GradientEstimation;

  static InteractiveState initial(Vector x0);
  bool operator==(const InteractiveState&) const = default;
};

/// Fixed-width little-endian byte image of the state, for exact comparisons.
std::string serialize_state(const InteractiveState& state);

struct InteractiveConfig {
  double eta = 1.0;
  double mu = 0.1;
  double gamma = 0.5;
  std::size_t m = 6;
  /// Largest k the feedback provider may answer with.
  std::size_t k = 6;

  void validate() const;
};

/// Candidates of a ranking round: m perturbations of x*.
PerturbationBatch interactive_ranking_batch(const InteractiveState& state,
                                            const InteractiveConfig& config, Rng& rng);

/// Folds a ranking answer into the state: x** becomes the top candidate,
/// the gradient memory absorbs the new estimate, phase moves to LineSearch.
InteractiveState apply_ranking(const InteractiveState& state, const PerturbationBatch& batch,
                               const RankingOutcome& outcome);

/// Candidates of a selection round, in order: x*, x**, then
/// x* - eta gamma^p g for p = 0..m-2 (m + 1 points in total).
std::vector<Vector> interactive_selection_candidates(const InteractiveState& state,
                                                     const InteractiveConfig& config);

/// Applies the selected position (0-based into the selection candidates).
/// Picking x* keeps the memory and returns to GradientEstimation; anything
/// else moves x* there and clears the memory.
InteractiveState apply_selection(const InteractiveState& state, const InteractiveConfig& config,
                                 std::size_t winner);

enum class StepStatus { Advanced, Pending, Rejected };

struct InteractiveStepResult {
  InteractiveState state;
  StepStatus status = StepStatus::Advanced;
  /// LineSearch phase only: whether x* moved.
  bool moved = false;
  std::string message;
};

/// Advances one phase. A timed-out oracle leaves the state (and rng)
/// untouched with status Pending; a malformed answer leaves them untouched
/// with status Rejected.
InteractiveStepResult interactive_step(const InteractiveState& state,
                                       const InteractiveConfig& config, RankingOracle& rank_oracle,
                                       RankingOracle& select_oracle, Rng& rng);

// Trajectory export: a JSON-lines file. The first line is a header
// {"format":"zorank-trajectory","version":1}; each further line is one
// record with fields t, f (null when unknown), grad_norm, queries,
// cumulative_queries, eta, mu, exponent (null when none).

inline constexpr int kTrajectoryFormatVersion = 1;

std::string trajectory_header_line();
std::string trajectory_record_line(const IterationRecord& record);
void write_trajectory(std::ostream& out, const Trajectory& trajectory);

}  // namespace zorank
