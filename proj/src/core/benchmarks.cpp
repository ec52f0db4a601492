#include "zorank/benchmarks.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <stdexcept>
#include <thread>

namespace zorank {

TestFunction::TestFunction(FunctionKind kind, std::size_t dim) : kind_(kind), dim_(dim) {
  if (dim_ < 1) throw std::invalid_argument("TestFunction: dimension must be >= 1");
  if (kind_ == FunctionKind::Rosenbrock && dim_ < 2) {
    throw std::invalid_argument("TestFunction: rosenbrock needs dimension >= 2");
  }
}

TestFunction TestFunction::parse(const std::string& name, std::size_t dim) {
  if (name == "quadratic") return TestFunction(FunctionKind::Quadratic, dim);
  if (name == "rosenbrock") return TestFunction(FunctionKind::Rosenbrock, dim);
  throw std::invalid_argument("unknown function '" + name + "' (expected quadratic or rosenbrock)");
}

std::string TestFunction::name() const {
  return kind_ == FunctionKind::Quadratic ? "quadratic" : "rosenbrock";
}

void TestFunction::check_dim(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw std::invalid_argument(name() + ": expected dimension " + std::to_string(dim_) + ", got " +
                                std::to_string(x.size()));
  }
}

double TestFunction::operator()(std::span<const double> x) const {
  check_dim(x);
  if (kind_ == FunctionKind::Quadratic) return squared_norm(x);
  double f = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = 1.0 - x[i];
    const double b = x[i + 1] - x[i] * x[i];
    f += a * a + 100.0 * b * b;
  }
  return f;
}

Vector TestFunction::gradient(std::span<const double> x) const {
  check_dim(x);
  Vector g(x.size(), 0.0);
  if (kind_ == FunctionKind::Quadratic) {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
    return g;
  }
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double b = x[i + 1] - x[i] * x[i];
    g[i] += -2.0 * (1.0 - x[i]) - 400.0 * x[i] * b;
    g[i + 1] += 200.0 * b;
  }
  return g;
}

Objective TestFunction::objective() const {
  return [fn = *this](std::span<const double> x) { return fn(x); };
}

GradientFn TestFunction::gradient_fn() const {
  return [fn = *this](std::span<const double> x) { return fn.gradient(x); };
}

double eval_function(const TestFunction& fn, std::span<const double> x) { return fn(x); }
Vector grad_function(const TestFunction& fn, std::span<const double> x) { return fn.gradient(x); }

void ExperimentSpec::validate() const {
  (void)test_function();
  config.validate();
  if (seeds.empty()) throw std::invalid_argument("seeds: at least one seed is required");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma: must be >= 0");
  if (query_budget && *query_budget <= 0) throw std::invalid_argument("query_budget: must be > 0");
  if (x0_scale && !(*x0_scale >= 0.0)) throw std::invalid_argument("x0_scale: must be >= 0");
  if (algorithm == Algorithm::PairwiseSgd && (config.m != 2 || config.k != 1)) {
    throw std::invalid_argument("algorithm: pairwise-sgd runs with m = 2, k = 1");
  }
  for (const auto& [m, k] : grid) {
    if (m < 2 || k < 1 || k > m) {
      throw std::invalid_argument("grid: invalid combination (" + std::to_string(m) + ", " +
                                  std::to_string(k) + ")");
    }
  }
  for (double s : sigmas) {
    if (!(s >= 0.0)) throw std::invalid_argument("sigmas: noise levels must be >= 0");
  }
}

namespace {

const std::set<std::string> kExperimentKeys = {
    "name",  "function",    "dim",        "algorithm",    "eta",      "mu",
    "m",     "k",           "iterations", "line_search",  "decay",    "schedule",
    "noise_sigma", "seeds", "query_budget", "x0_scale",   "grid",     "sigmas"};

}  // namespace

ExperimentSpec parse_experiment(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kExperimentKeys.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  ExperimentSpec spec;
  auto field = [&](const char* key) -> const nlohmann::json* {
    auto it = j.find(key);
    return (it == j.end() || it->is_null()) ? nullptr : &*it;
  };
  try {
    if (auto v = field("name")) spec.name = v->get<std::string>();
    if (auto v = field("function")) spec.function = TestFunction::parse(v->get<std::string>(), 2).kind();
    if (auto v = field("dim")) spec.dim = v->get<std::size_t>();
    if (auto v = field("algorithm")) spec.algorithm = parse_algorithm(v->get<std::string>());
    if (auto v = field("eta")) spec.config.eta = v->get<double>();
    if (auto v = field("mu")) spec.config.mu = v->get<double>();
    if (auto v = field("m")) spec.config.m = v->get<std::size_t>();
    if (auto v = field("k")) spec.config.k = v->get<std::size_t>();
    if (auto v = field("iterations")) spec.config.iterations = v->get<std::int64_t>();
    if (auto v = field("line_search")) {
      LineSearchConfig ls;
      ls.trials = v->value("trials", ls.trials);
      ls.gamma = v->value("gamma", ls.gamma);
      spec.config.line_search = ls;
    }
    if (auto v = field("decay")) spec.config.decay = v->get<double>();
    if (auto v = field("noise_sigma")) spec.noise_sigma = v->get<double>();
    if (auto v = field("seeds")) spec.seeds = v->get<std::vector<std::uint64_t>>();
    if (auto v = field("query_budget")) spec.query_budget = v->get<std::int64_t>();
    if (auto v = field("x0_scale")) spec.x0_scale = v->get<double>();
    if (auto v = field("grid")) {
      for (const auto& pair : *v) spec.grid.emplace_back(pair.at(0).get<std::size_t>(), pair.at(1).get<std::size_t>());
    }
    if (auto v = field("sigmas")) spec.sigmas = v->get<std::vector<double>>();
    if (auto v = field("schedule")) {
      const std::string kind = v->value("kind", std::string("theorem"));
      if (kind != "theorem") throw std::invalid_argument("schedule.kind: only 'theorem' is supported");
      const double c_d = v->value("c_d", 1.0);
      OptimizerConfig scheduled = OptimizerConfig::theorem_schedule(
          spec.dim, spec.config.iterations, spec.config.m, spec.config.k, c_d);
      spec.config.eta = scheduled.eta;
      spec.config.mu = scheduled.mu;
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("experiment config: ") + e.what());
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return parse_experiment(j);
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  j["name"] = spec.name;
  j["function"] = spec.test_function().name();
  j["dim"] = spec.dim;
  j["algorithm"] = to_string(spec.algorithm);
  j["eta"] = spec.config.eta;
  j["mu"] = spec.config.mu;
  j["m"] = spec.config.m;
  j["k"] = spec.config.k;
  j["iterations"] = spec.config.iterations;
  if (spec.config.line_search) {
    j["line_search"] = {{"trials", spec.config.line_search->trials},
                        {"gamma", spec.config.line_search->gamma}};
  }
  if (spec.config.decay) j["decay"] = *spec.config.decay;
  j["noise_sigma"] = spec.noise_sigma;
  j["seeds"] = spec.seeds;
  if (spec.query_budget) j["query_budget"] = *spec.query_budget;
  if (spec.x0_scale) j["x0_scale"] = *spec.x0_scale;
  if (!spec.grid.empty()) {
    nlohmann::json grid = nlohmann::json::array();
    for (const auto& [m, k] : spec.grid) grid.push_back({m, k});
    j["grid"] = grid;
  }
  if (!spec.sigmas.empty()) j["sigmas"] = spec.sigmas;
  return j;
}

namespace {

std::vector<std::uint64_t> ten_seeds() {
  std::vector<std::uint64_t> seeds(10);
  for (std::uint64_t i = 0; i < seeds.size(); ++i) seeds[i] = i;
  return seeds;
}

ExperimentSpec grid_setup(FunctionKind kind) {
  ExperimentSpec spec;
  spec.function = kind;
  spec.dim = 100;
  spec.config.eta = 50.0;
  spec.config.mu = 0.01;
  spec.config.m = 10;
  spec.config.k = 10;
  spec.config.iterations = 200;
  spec.config.line_search = LineSearchConfig{5, 0.1};
  spec.seeds = ten_seeds();
  spec.grid = {{10, 1}, {10, 5}, {10, 10}, {100, 1}, {100, 5}, {100, 10}};
  return spec;
}

}  // namespace

ExperimentSpec preset(const std::string& name) {
  ExperimentSpec spec;
  if (name == "grid-quadratic" || name == "grid-rosenbrock") {
    spec = grid_setup(name == "grid-quadratic" ? FunctionKind::Quadratic : FunctionKind::Rosenbrock);
  } else if (name == "compare-quadratic" || name == "compare-rosenbrock" ||
             name == "highdim-quadratic" || name == "highdim-rosenbrock") {
    // 15 queries per iteration: 10 ranked points plus 5 line-search trials.
    spec = grid_setup(name.ends_with("quadratic") ? FunctionKind::Quadratic : FunctionKind::Rosenbrock);
    spec.grid.clear();
    spec.config.iterations = 500;
    if (name.starts_with("highdim")) spec.dim = 10000;
  } else if (name == "noise-quadratic" || name == "noise-rosenbrock") {
    spec = grid_setup(name == "noise-quadratic" ? FunctionKind::Quadratic : FunctionKind::Rosenbrock);
    spec.grid.clear();
    spec.sigmas = {0.0, 1.0, 10.0};
  } else if (name == "theorem-quadratic") {
    spec.function = FunctionKind::Quadratic;
    spec.dim = 100;
    spec.config = OptimizerConfig::theorem_schedule(100, 1000, 10, 10, 1.0);
    spec.seeds = ten_seeds();
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  spec.name = name;
  spec.validate();
  return spec;
}

std::vector<std::string> preset_names() {
  return {"grid-quadratic",     "grid-rosenbrock", "compare-quadratic", "compare-rosenbrock",
          "noise-quadratic",    "noise-rosenbrock", "theorem-quadratic", "highdim-quadratic",
          "highdim-rosenbrock"};
}

Vector initial_point(const ExperimentSpec& spec, std::uint64_t seed) {
  const TestFunction fn = spec.test_function();
  const double scale = spec.x0_scale.value_or(fn.default_x0_scale());
  Rng rng = Rng(seed).split(0);
  Vector x0 = rng.normal_vector(spec.dim);
  for (double& v : x0) v *= scale;
  return x0;
}

SeedRun run_seed(const ExperimentSpec& spec, std::uint64_t seed, bool keep_points) {
  const TestFunction fn = spec.test_function();
  const Objective f = fn.objective();
  const Rng root(seed);
  Rng directions = root.split(1);

  std::unique_ptr<RankingOracle> oracle;
  if (spec.noise_sigma > 0.0) {
    oracle = std::make_unique<NoisyOracle>(f, NoiseSpec{spec.noise_sigma}, root.split(2));
  } else {
    oracle = std::make_unique<ExactOracle>(f);
  }

  Objective value_f = f;
  if (spec.noise_sigma > 0.0) {
    auto noise = std::make_shared<Rng>(root.split(3));
    value_f = [f, noise, sigma = spec.noise_sigma](std::span<const double> x) {
      return f(x) + sigma * noise->normal();
    };
  }
  ValueOracle values(value_f);

  RunOptions options;
  options.algorithm = spec.algorithm;
  options.stop.max_queries = spec.query_budget;
  options.reporting_objective = f;
  options.keep_points = keep_points;

  SeedRun result;
  result.seed = seed;
  result.trajectory = run(spec.config, *oracle, initial_point(spec, seed), directions, options, &values);
  result.metered_queries = oracle->queries() + values.queries();
  return result;
}

AggregateResult aggregate_runs(const std::vector<SeedRun>& runs) {
  if (runs.size() < 2) throw std::invalid_argument("aggregate_runs: need at least 2 runs");
  struct Series {
    std::vector<std::int64_t> q;
    std::vector<double> f;
  };
  std::vector<Series> series;
  std::set<std::int64_t> grid;
  std::int64_t horizon = INT64_MAX;
  for (const SeedRun& run : runs) {
    const Trajectory& t = run.trajectory;
    if (!t.initial_f) throw std::invalid_argument("aggregate_runs: trajectories need f values");
    Series s;
    s.q.push_back(0);
    s.f.push_back(*t.initial_f);
    for (const IterationRecord& r : t.records) {
      s.q.push_back(r.cumulative_queries);
      s.f.push_back(r.f_value.value());
    }
    horizon = std::min(horizon, s.q.back());
    grid.insert(s.q.begin(), s.q.end());
    series.push_back(std::move(s));
  }
  AggregateResult out;
  std::vector<std::size_t> cursor(series.size(), 0);
  for (std::int64_t q : grid) {
    if (q > horizon) break;
    AggregateRow row;
    row.queries = q;
    row.n_seeds = series.size();
    std::vector<double> values;
    values.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      while (cursor[i] + 1 < series[i].q.size() && series[i].q[cursor[i] + 1] <= q) ++cursor[i];
      values.push_back(series[i].f[cursor[i]]);
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean_f = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - row.mean_f) * (v - row.mean_f);
    row.std_f = std::sqrt(ss / static_cast<double>(values.size() - 1));
    out.rows.push_back(row);
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned workers) {
  spec.validate();
  ExperimentResult result;
  result.spec = spec;
  std::vector<SeedRun> runs(spec.seeds.size());
  std::vector<std::string> failures(spec.seeds.size());

  auto work = [&](std::size_t i) {
    try {
      runs[i] = run_seed(spec, spec.seeds[i]);
      if (runs[i].trajectory.error) failures[i] = *runs[i].trajectory.error;
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  };
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, spec.seeds.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < runs.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!failures[i].empty()) {
      result.warnings.push_back("seed " + std::to_string(spec.seeds[i]) + " failed: " + failures[i]);
    } else {
      result.runs.push_back(std::move(runs[i]));
    }
  }
  if (result.runs.size() < 2) {
    std::string msg = "fewer than 2 seeds survived";
    for (const auto& w : result.warnings) msg += "; " + w;
    throw std::runtime_error(msg);
  }
  result.aggregate = aggregate_runs(result.runs);
  return result;
}

std::vector<GridRow> mk_grid_study(const ExperimentSpec& base,
                                   const std::vector<std::pair<std::size_t, std::size_t>>& combos,
                                   unsigned workers) {
  std::vector<GridRow> rows;
  const auto d = static_cast<double>(base.dim);
  for (const auto& [m, k] : combos) {
    ExperimentSpec spec = base;
    spec.config.m = m;
    spec.config.k = k;
    spec.name = base.name + "-m" + std::to_string(m) + "-k" + std::to_string(k);
    GridRow row;
    row.m = m;
    row.k = k;
    row.edges = edge_count(static_cast<std::int64_t>(m), static_cast<std::int64_t>(k));
    row.neighbor_pairs = neighbor_pair_count(static_cast<std::int64_t>(m), static_cast<std::int64_t>(k));
    row.correlation_factor =
        static_cast<double>(row.neighbor_pairs) / (static_cast<double>(row.edges) * static_cast<double>(row.edges));
    row.predicted_bound = second_moment_bound(static_cast<std::int64_t>(m), static_cast<std::int64_t>(k),
                                       static_cast<std::int64_t>(base.dim), 2.0 * d, 2.0 * d);
    row.result = run_experiment(spec, workers);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<NoiseRow> noise_sweep(const ExperimentSpec& base, const std::vector<double>& sigmas,
                                  unsigned workers) {
  std::vector<NoiseRow> rows;
  for (double sigma : sigmas) {
    ExperimentSpec spec = base;
    spec.noise_sigma = sigma;
    spec.name = base.name + "-sigma" + format_double(sigma);
    rows.push_back({sigma, run_experiment(spec, workers)});
  }
  return rows;
}

std::vector<std::string> check_invariants(const ExperimentResult& result) {
  std::vector<std::string> failures;
  const bool monotone = result.spec.noise_sigma == 0.0 && result.spec.config.line_search.has_value();
  for (const SeedRun& run : result.runs) {
    const std::string who = result.spec.name + " seed " + std::to_string(run.seed);
    if (run.trajectory.total_queries != run.metered_queries) {
      failures.push_back(who + ": reported queries " + std::to_string(run.trajectory.total_queries) +
                         " != metered " + std::to_string(run.metered_queries));
    }
    if (!monotone) continue;
    double prev = run.trajectory.initial_f.value_or(INFINITY);
    for (const IterationRecord& r : run.trajectory.records) {
      if (r.f_value && *r.f_value > prev) {
        failures.push_back(who + ": f increased at t=" + std::to_string(r.t));
        break;
      }
      if (r.f_value) prev = *r.f_value;
    }
  }
  return failures;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_aggregate_csv(const std::filesystem::path& path, const AggregateResult& aggregate) {
  std::ofstream out = open_output(path);
  out << "queries,mean_f,std_f,n_seeds\n";
  for (const AggregateRow& row : aggregate.rows) {
    out << row.queries << ',' << format_double(row.mean_f) << ',' << format_double(row.std_f) << ','
        << row.n_seeds << '\n';
  }
}

void write_outputs(const std::filesystem::path& dir, const ExperimentResult& result) {
  write_aggregate_csv(dir / "aggregate.csv", result.aggregate);
  for (const SeedRun& run : result.runs) {
    std::ofstream out = open_output(dir / "trajectories" / ("seed_" + std::to_string(run.seed) + ".jsonl"));
    write_trajectory(out, run.trajectory);
  }
  std::ofstream spec_out = open_output(dir / "spec.json");
  spec_out << to_json(result.spec).dump(2) << '\n';
}

void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows) {
  std::ofstream out = open_output(path);
  out << "m,k,edges,neighbor_pairs,correlation_factor,predicted_bound,final_queries,final_mean_f,final_std_f\n";
  for (const GridRow& row : rows) {
    const AggregateRow& last = row.result.aggregate.final_row();
    out << row.m << ',' << row.k << ',' << row.edges << ',' << row.neighbor_pairs << ','
        << format_double(row.correlation_factor) << ',' << format_double(row.predicted_bound) << ','
        << last.queries << ',' << format_double(last.mean_f) << ',' << format_double(last.std_f) << '\n';
  }
}

void write_noise_csv(const std::filesystem::path& path, const std::vector<NoiseRow>& rows) {
  std::ofstream out = open_output(path);
  out << "sigma,final_queries,final_mean_f,final_std_f\n";
  for (const NoiseRow& row : rows) {
    const AggregateRow& last = row.result.aggregate.final_row();
    out << format_double(row.sigma) << ',' << last.queries << ',' << format_double(last.mean_f) << ','
        << format_double(last.std_f) << '\n';
  }
}

}  // namespace zorank
