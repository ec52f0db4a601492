#include "zorank/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace zorank {

namespace {

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw std::invalid_argument(field + ": " + why);
}

void check_finite(const Vector& x, const char* what) {
  if (!all_finite(x)) {
    throw std::runtime_error(std::string(what) + " produced a non-finite point; reduce eta or mu");
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  require(std::isfinite(eta) && eta > 0.0, "eta", "must be positive");
  require(std::isfinite(mu) && mu > 0.0, "mu", "must be positive");
  require(m >= 2, "m", "must be >= 2");
  require(k >= 1 && k <= m, "k", "must satisfy 1 <= k <= m");
  require(iterations >= 0, "iterations", "must be >= 0");
  if (line_search) {
    require(line_search->trials >= 2, "line_search.trials", "must be >= 2");
    require(line_search->gamma > 0.0 && line_search->gamma < 1.0, "line_search.gamma",
            "must lie in (0, 1)");
  }
  if (decay) require(*decay > 0.0 && *decay <= 1.0, "decay", "must lie in (0, 1]");
}

OptimizerConfig OptimizerConfig::theorem_schedule(std::size_t dim, std::int64_t iterations,
                                                  std::size_t m, std::size_t k, double c_d) {
  require(dim >= 1, "dim", "must be >= 1");
  require(iterations >= 1, "iterations", "must be >= 1");
  require(c_d > 0.0, "c_d", "must be positive");
  OptimizerConfig config;
  const double d = static_cast<double>(dim);
  const double t = static_cast<double>(iterations);
  config.eta = std::sqrt(1.0 / (d * t));
  config.mu = std::sqrt(d / (c_d * c_d * t));
  config.m = m;
  config.k = k;
  config.iterations = iterations;
  config.validate();
  return config;
}

LineSearchResult line_search_step(const Vector& x, const Vector& g, double eta, double gamma,
                                  std::size_t trials, RankingOracle& select_oracle) {
  if (trials < 2) throw std::invalid_argument("line_search_step: trials must be >= 2");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("line_search_step: gamma must lie in (0, 1)");
  std::vector<Vector> candidates;
  candidates.reserve(trials);
  candidates.push_back(x);
  double scale = eta;
  for (std::size_t p = 1; p < trials; ++p) {
    scale *= gamma;
    candidates.push_back(step(x, scale, g));
    check_finite(candidates.back(), "line search");
  }
  const std::size_t winner = select_oracle.select(candidates);
  if (winner == 0) return {x, std::nullopt};
  return {std::move(candidates[winner]), static_cast<int>(winner)};
}

namespace {

StepResult finish_step(const Vector& x, const Vector& g, const OptimizerConfig& config,
                       std::int64_t queries, RankingOracle* select_oracle) {
  StepResult result;
  result.record.point_before = x;
  result.record.gradient_norm = norm(g);
  result.record.eta = config.eta;
  result.record.mu = config.mu;
  result.record.queries = queries;
  if (config.line_search) {
    if (select_oracle == nullptr) throw std::invalid_argument("line search needs a select oracle");
    const std::int64_t before = select_oracle->queries();
    LineSearchResult ls = line_search_step(x, g, config.eta, config.line_search->gamma,
                                           config.line_search->trials, *select_oracle);
    result.record.queries += select_oracle->queries() - before;
    result.point = std::move(ls.point);
    result.record.accepted_exponent = ls.exponent;
  } else {
    result.point = step(x, config.eta, g);
    check_finite(result.point, "gradient step");
  }
  result.record.point_after = result.point;
  return result;
}

}  // namespace

StepResult zo_rank_sgd_step(const PerturbationBatch& batch, const OptimizerConfig& config,
                            RankingOracle& oracle, RankingOracle* select_oracle) {
  for (const Vector& c : batch.candidates()) check_finite(c, "perturbation");
  OracleRequest request;
  request.points = batch.candidates();
  request.k = config.k;
  const std::int64_t before = oracle.queries();
  const RankingOutcome outcome = oracle.rank(request);
  const std::int64_t spent = oracle.queries() - before;
  const GradientEstimate g = estimate_gradient(batch, outcome);
  return finish_step(batch.base_point(), g.vector, config, spent, select_oracle);
}

StepResult zo_rank_sgd_step(const Vector& x, const OptimizerConfig& config, RankingOracle& oracle,
                            Rng& rng, RankingOracle* select_oracle) {
  const PerturbationBatch batch = sample_perturbations(x, config.m, config.mu, rng);
  return zo_rank_sgd_step(batch, config, oracle, select_oracle);
}

StepResult pairwise_sgd_step(const Vector& x, const OptimizerConfig& config, RankingOracle& oracle,
                             Rng& rng, RankingOracle* select_oracle) {
  const PerturbationBatch batch = sample_perturbations(x, 2, config.mu, rng);
  for (const Vector& c : batch.candidates()) check_finite(c, "perturbation");
  OracleRequest request;
  request.points = batch.candidates();
  request.k = 1;
  const std::int64_t before = oracle.queries();
  const RankingOutcome outcome = oracle.rank(request);
  const std::int64_t spent = oracle.queries() - before;
  // The first candidate winning means f(x + mu xi1) < f(x + mu xi2).
  const int sign = outcome.best() == 0 ? -1 : 1;
  const Vector g = pairwise_estimate(sign, batch.directions()[0], batch.directions()[1]);
  return finish_step(x, g, config, spent, select_oracle);
}

StepResult zo_sgd_step(const Vector& x, std::span<const Vector> directions,
                       const OptimizerConfig& config, ValueOracle& values,
                       RankingOracle* select_oracle) {
  if (directions.empty()) throw std::invalid_argument("zo_sgd_step: no directions");
  const std::int64_t before = values.queries();
  const double fx = values(x);
  Vector g(x.size(), 0.0);
  for (const Vector& xi : directions) {
    Vector probe = x;
    axpy(config.mu, xi, probe);
    check_finite(probe, "perturbation");
    const double slope = (values(probe) - fx) / config.mu;
    axpy(slope, xi, g);
  }
  const auto n = static_cast<double>(directions.size());
  for (double& v : g) v /= n;
  return finish_step(x, g, config, values.queries() - before, select_oracle);
}

StepResult zo_sgd_step(const Vector& x, const OptimizerConfig& config, ValueOracle& values, Rng& rng,
                       RankingOracle* select_oracle) {
  std::vector<Vector> directions;
  const std::size_t count = config.m > 1 ? config.m - 1 : 1;
  directions.reserve(count);
  for (std::size_t i = 0; i < count; ++i) directions.push_back(rng.normal_vector(x.size()));
  return zo_sgd_step(x, directions, config, values, select_oracle);
}

const char* to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::ZoRankSgd: return "zo-rank-sgd";
    case Algorithm::PairwiseSgd: return "pairwise-sgd";
    case Algorithm::ZoSgd: return "zo-sgd";
  }
  return "zo-rank-sgd";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "zo-rank-sgd") return Algorithm::ZoRankSgd;
  if (name == "pairwise-sgd") return Algorithm::PairwiseSgd;
  if (name == "zo-sgd") return Algorithm::ZoSgd;
  throw std::invalid_argument("unknown algorithm '" + name +
                              "' (expected zo-rank-sgd, pairwise-sgd or zo-sgd)");
}

Trajectory run(const OptimizerConfig& config, RankingOracle& oracle, const Vector& x0, Rng& rng,
               const RunOptions& options, ValueOracle* values) {
  config.validate();
  if (x0.empty()) throw std::invalid_argument("run: empty initial point");
  if (options.algorithm == Algorithm::ZoSgd && values == nullptr) {
    throw std::invalid_argument("run: zo-sgd needs a value oracle");
  }
  Trajectory traj;
  traj.initial_point = x0;
  traj.final_point = x0;
  if (options.reporting_objective) traj.initial_f = options.reporting_objective(x0);

  OptimizerConfig current = config;
  RankingOracle* select = config.line_search ? &oracle : nullptr;
  for (std::int64_t t = 1; t <= config.iterations; ++t) {
    StepResult step_result;
    try {
      switch (options.algorithm) {
        case Algorithm::ZoRankSgd:
          step_result = zo_rank_sgd_step(traj.final_point, current, oracle, rng, select);
          break;
        case Algorithm::PairwiseSgd:
          step_result = pairwise_sgd_step(traj.final_point, current, oracle, rng, select);
          break;
        case Algorithm::ZoSgd:
          step_result = zo_sgd_step(traj.final_point, current, *values, rng, select);
          break;
      }
    } catch (const std::exception& e) {
      traj.error = "iteration " + std::to_string(t) + ": " + e.what();
      break;
    }
    IterationRecord& rec = step_result.record;
    rec.t = t;
    traj.total_queries += rec.queries;
    rec.cumulative_queries = traj.total_queries;
    if (options.reporting_objective) rec.f_value = options.reporting_objective(step_result.point);
    traj.final_point = std::move(step_result.point);
    if (options.on_record) options.on_record(rec);
    const bool stop = (options.stop.max_queries && traj.total_queries >= *options.stop.max_queries) ||
                      (options.stop.predicate && options.stop.predicate(rec));
    if (!options.keep_points) {
      rec.point_before.clear();
      rec.point_before.shrink_to_fit();
      rec.point_after.clear();
      rec.point_after.shrink_to_fit();
    }
    traj.records.push_back(std::move(rec));
    if (current.decay) {
      current.eta *= *current.decay;
      current.mu *= *current.decay;
    }
    if (stop) break;
  }
  return traj;
}

const char* to_string(InteractivePhase phase) {
  return phase == InteractivePhase::GradientEstimation ? "gradient-estimation" : "line-search";
}

InteractiveState InteractiveState::initial(Vector x0) {
  if (x0.empty()) throw std::invalid_argument("InteractiveState: empty initial point");
  InteractiveState s;
  s.gradient_memory.assign(x0.size(), 0.0);
  s.batch_best = x0;
  s.best_point = std::move(x0);
  return s;
}

std::string serialize_state(const InteractiveState& state) {
  std::string out;
  auto put_u64 = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put_vec = [&](const Vector& v) {
    put_u64(v.size());
    for (double x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      put_u64(bits);
    }
  };
  put_vec(state.best_point);
  put_vec(state.batch_best);
  put_vec(state.gradient_memory);
  put_u64(static_cast<std::uint64_t>(state.tau));
  put_u64(state.phase == InteractivePhase::GradientEstimation ? 0 : 1);
  return out;
}

void InteractiveConfig::validate() const {
  require(std::isfinite(eta) && eta > 0.0, "eta", "must be positive");
  require(std::isfinite(mu) && mu > 0.0, "mu", "must be positive");
  require(gamma > 0.0 && gamma < 1.0, "gamma", "must lie in (0, 1)");
  require(m >= 2, "m", "must be >= 2");
  require(k >= 1 && k <= m, "k", "must satisfy 1 <= k <= m");
}

PerturbationBatch interactive_ranking_batch(const InteractiveState& state,
                                            const InteractiveConfig& config, Rng& rng) {
  return sample_perturbations(state.best_point, config.m, config.mu, rng);
}

InteractiveState apply_ranking(const InteractiveState& state, const PerturbationBatch& batch,
                               const RankingOutcome& outcome) {
  if (state.phase != InteractivePhase::GradientEstimation) {
    throw std::logic_error("apply_ranking: state is not in the gradient-estimation phase");
  }
  const GradientEstimate estimate = estimate_gradient(batch, outcome);
  InteractiveState next = state;
  next.batch_best = batch.candidates()[outcome.best()];
  const double tau = static_cast<double>(state.tau);
  for (std::size_t i = 0; i < next.gradient_memory.size(); ++i) {
    next.gradient_memory[i] = (tau * state.gradient_memory[i] + estimate.vector[i]) / (tau + 1.0);
  }
  next.tau = state.tau + 1;
  next.phase = InteractivePhase::LineSearch;
  return next;
}

std::vector<Vector> interactive_selection_candidates(const InteractiveState& state,
                                                     const InteractiveConfig& config) {
  std::vector<Vector> candidates;
  candidates.reserve(config.m + 1);
  candidates.push_back(state.best_point);
  candidates.push_back(state.batch_best);
  double scale = config.eta;
  for (std::size_t p = 0; p + 1 < config.m; ++p) {
    candidates.push_back(step(state.best_point, scale, state.gradient_memory));
    scale *= config.gamma;
  }
  return candidates;
}

InteractiveState apply_selection(const InteractiveState& state, const InteractiveConfig& config,
                                 std::size_t winner) {
  if (state.phase != InteractivePhase::LineSearch) {
    throw std::logic_error("apply_selection: state is not in the line-search phase");
  }
  if (winner > config.m) {
    throw std::invalid_argument("apply_selection: winner " + std::to_string(winner + 1) +
                                " out of range 1.." + std::to_string(config.m + 1));
  }
  InteractiveState next = state;
  next.phase = InteractivePhase::GradientEstimation;
  if (winner == 0) return next;
  next.best_point = interactive_selection_candidates(state, config)[winner];
  std::fill(next.gradient_memory.begin(), next.gradient_memory.end(), 0.0);
  next.tau = 0;
  return next;
}

InteractiveStepResult interactive_step(const InteractiveState& state,
                                       const InteractiveConfig& config, RankingOracle& rank_oracle,
                                       RankingOracle& select_oracle, Rng& rng) {
  config.validate();
  InteractiveStepResult result{state, StepStatus::Advanced, false, ""};
  try {
    if (state.phase == InteractivePhase::GradientEstimation) {
      Rng trial = rng;
      const PerturbationBatch batch = interactive_ranking_batch(state, config, trial);
      OracleRequest request;
      request.points = batch.candidates();
      request.k = config.k;
      const RankingOutcome outcome = rank_oracle.rank(request);
      result.state = apply_ranking(state, batch, outcome);
      rng = trial;
    } else {
      const std::vector<Vector> candidates = interactive_selection_candidates(state, config);
      for (const Vector& c : candidates) check_finite(c, "selection");
      const std::size_t winner = select_oracle.select(candidates);
      result.state = apply_selection(state, config, winner);
      result.moved = winner != 0;
    }
  } catch (const OracleTimeout& e) {
    result.state = state;
    result.status = StepStatus::Pending;
    result.message = e.what();
  } catch (const std::invalid_argument& e) {
    result.state = state;
    result.status = StepStatus::Rejected;
    result.message = e.what();
  }
  return result;
}

std::string trajectory_header_line() {
  nlohmann::json header = {{"format", "zorank-trajectory"}, {"version", kTrajectoryFormatVersion}};
  return header.dump();
}

std::string trajectory_record_line(const IterationRecord& record) {
  nlohmann::json j;
  j["t"] = record.t;
  j["f"] = record.f_value ? nlohmann::json(*record.f_value) : nlohmann::json(nullptr);
  j["grad_norm"] = record.gradient_norm;
  j["queries"] = record.queries;
  j["cumulative_queries"] = record.cumulative_queries;
  j["eta"] = record.eta;
  j["mu"] = record.mu;
  j["exponent"] =
      record.accepted_exponent ? nlohmann::json(*record.accepted_exponent) : nlohmann::json(nullptr);
  return j.dump();
}

void write_trajectory(std::ostream& out, const Trajectory& trajectory) {
  out << trajectory_header_line() << '\n';
  for (const IterationRecord& rec : trajectory.records) out << trajectory_record_line(rec) << '\n';
}

}  // namespace zorank
