// zorank: benchmark runner for rank-based zeroth-order optimization.
//
//   zorank run          --preset grid-quadratic --out results/grid-quadratic
//   zorank grid         --preset grid-quadratic --out results/grid
//   zorank noise-sweep  --config tools/configs/noise-quadratic.json --sigmas 0,1,10
//   zorank variance-check --function rosenbrock --dim 10
//
// Every subcommand exits with status 1 when an invariant check fails.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "zorank/benchmarks.hpp"

namespace fs = std::filesystem;
using namespace zorank;

namespace {

struct ExperimentFlags {
  std::string config;
  std::string preset;
  std::vector<std::uint64_t> seeds;
  std::string out = "results";
  std::int64_t budget = 0;
  unsigned workers = 0;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& flags) {
  auto* config = cmd->add_option("--config", flags.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  auto* preset = cmd->add_option("--preset", flags.preset, "Built-in experiment preset");
  config->excludes(preset);
  cmd->add_option("--seeds", flags.seeds, "Seed list, e.g. --seeds 0,1,2")->delimiter(',');
  cmd->add_option("--out", flags.out, "Output directory");
  cmd->add_option("--budget", flags.budget, "Query budget per seed")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", flags.workers, "Worker threads (0 = all cores)");
}

ExperimentSpec resolve(const ExperimentFlags& flags) {
  if (flags.config.empty() && flags.preset.empty()) {
    throw std::invalid_argument("one of --config or --preset is required");
  }
  ExperimentSpec spec = flags.config.empty() ? preset(flags.preset) : load_experiment(flags.config);
  if (!flags.seeds.empty()) spec.seeds = flags.seeds;
  if (flags.budget > 0) spec.query_budget = flags.budget;
  spec.validate();
  return spec;
}

int report(const std::vector<std::string>& warnings, const std::vector<std::string>& failures) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : failures) std::cerr << "invariant failed: " << f << '\n';
  return failures.empty() ? 0 : 1;
}

void print_final(const std::string& label, const ExperimentResult& result) {
  const AggregateRow& last = result.aggregate.final_row();
  std::cout << label << ": queries=" << last.queries << " mean_f=" << format_double(last.mean_f)
            << " std_f=" << format_double(last.std_f) << " seeds=" << last.n_seeds << '\n';
}

int cmd_run(const ExperimentFlags& flags) {
  const ExperimentSpec spec = resolve(flags);
  const ExperimentResult result = run_experiment(spec, flags.workers);
  write_outputs(flags.out, result);
  print_final(spec.name, result);
  return report(result.warnings, check_invariants(result));
}

int cmd_grid(const ExperimentFlags& flags, const std::vector<std::string>& combos) {
  ExperimentSpec spec = resolve(flags);
  std::vector<std::pair<std::size_t, std::size_t>> grid = spec.grid;
  if (!combos.empty()) {
    grid.clear();
    for (const std::string& c : combos) {
      const auto colon = c.find(':');
      if (colon == std::string::npos) throw std::invalid_argument("--grid entries look like m:k, got " + c);
      grid.emplace_back(std::stoul(c.substr(0, colon)), std::stoul(c.substr(colon + 1)));
    }
  }
  if (grid.empty()) throw std::invalid_argument("no (m,k) grid: pass --grid or use a config with one");
  const auto rows = mk_grid_study(spec, grid, flags.workers);
  write_grid_csv(fs::path(flags.out) / "grid.csv", rows);
  std::vector<std::string> warnings, failures;
  for (const GridRow& row : rows) {
    write_outputs(fs::path(flags.out) / ("m" + std::to_string(row.m) + "_k" + std::to_string(row.k)), row.result);
    print_final(row.result.spec.name, row.result);
    for (auto& w : row.result.warnings) warnings.push_back(w);
    for (auto& f : check_invariants(row.result)) failures.push_back(f);
  }
  return report(warnings, failures);
}

int cmd_noise(const ExperimentFlags& flags, std::vector<double> sigmas) {
  const ExperimentSpec spec = resolve(flags);
  if (sigmas.empty()) sigmas = spec.sigmas;
  if (sigmas.empty()) throw std::invalid_argument("no noise levels: pass --sigmas or use a config with them");
  const auto rows = noise_sweep(spec, sigmas, flags.workers);
  write_noise_csv(fs::path(flags.out) / "noise.csv", rows);
  std::vector<std::string> warnings, failures;
  for (const NoiseRow& row : rows) {
    write_outputs(fs::path(flags.out) / ("sigma_" + format_double(row.sigma)), row.result);
    print_final(row.result.spec.name, row.result);
    for (auto& w : row.result.warnings) warnings.push_back(w);
    for (auto& f : check_invariants(row.result)) failures.push_back(f);
  }
  return report(warnings, failures);
}

struct VarianceFlags {
  std::string function = "quadratic";
  std::size_t dim = 10;
  double mu = 0.01;
  std::int64_t samples = kDefaultMetricSamples;
  std::int64_t moment_samples = kDefaultMomentSamples;
  std::uint64_t seed = 0;
  std::string location = "random";
  std::vector<std::string> pairs = {"2:1", "5:3", "10:10", "100:1"};
  std::string out;
};

int cmd_variance(const VarianceFlags& flags) {
  const TestFunction fn = TestFunction::parse(flags.function, flags.dim);
  Vector x(flags.dim, 0.0);
  if (flags.location == "ones") {
    x.assign(flags.dim, 1.0);
  } else if (flags.location == "random") {
    Rng draw = Rng(flags.seed).split(0);
    x = draw.normal_vector(flags.dim);
  } else if (flags.location != "zero") {
    throw std::invalid_argument("--location must be zero, ones or random");
  }
  Rng rng = Rng(flags.seed).split(1);
  const double d = static_cast<double>(flags.dim);
  const MetricEstimate m1 = estimate_m1(fn.objective(), x, flags.mu, flags.samples, rng);
  const MetricEstimate m2 = estimate_m2(fn.objective(), x, flags.mu, flags.samples, rng);

  std::vector<BoundCheck> checks;
  checks.push_back({"M1", m1.value, m1.standard_error, 2.0 * d});
  checks.push_back({"M2", m2.value, m2.standard_error, 2.0 * d});
  if (fn.kind() == FunctionKind::Quadratic) {
    checks.push_back({"M1-quadratic", m1.value, m1.standard_error, 32.0 / std::numbers::pi});
  }
  for (const std::string& p : flags.pairs) {
    const auto colon = p.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--pairs entries look like m:k, got " + p);
    const std::size_t m = std::stoul(p.substr(0, colon));
    const std::size_t k = std::stoul(p.substr(colon + 1));
    const MetricEstimate second = empirical_second_moment(fn.objective(), x, flags.mu, m, k, flags.moment_samples, rng);
    const auto mi = static_cast<std::int64_t>(m);
    const auto ki = static_cast<std::int64_t>(k);
    const double bound = second_moment_bound(mi, ki, static_cast<std::int64_t>(flags.dim), m1.value, m2.value);
    // The bound inherits the metric estimates' uncertainty.
    const double e = static_cast<double>(edge_count(mi, ki));
    const double c = static_cast<double>(neighbor_pair_count(mi, ki)) / (e * e);
    const double se = std::sqrt(second.standard_error * second.standard_error +
                                m1.standard_error * m1.standard_error +
                                c * c * m2.standard_error * m2.standard_error);
    checks.push_back({"second-moment(m=" + std::to_string(m) + ",k=" + std::to_string(k) + ")",
                      second.value, se, bound});
  }

  std::ofstream file;
  if (!flags.out.empty()) {
    fs::create_directories(flags.out);
    file.open(fs::path(flags.out) / "variance.jsonl", std::ios::trunc);
  }
  std::vector<std::string> failures;
  for (const BoundCheck& check : checks) {
    const std::string line = report_line(check);
    std::cout << line << '\n';
    if (file) file << line << '\n';
    if (!check.passed()) failures.push_back(check.metric + " exceeds its bound");
  }
  return report({}, failures);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-based zeroth-order optimization benchmarks"};
  app.require_subcommand(1);

  ExperimentFlags run_flags, grid_flags, noise_flags;
  auto* run = app.add_subcommand("run", "Run one experiment over its seeds");
  add_experiment_flags(run, run_flags);

  auto* grid = app.add_subcommand("grid", "Sweep (m,k) combinations");
  add_experiment_flags(grid, grid_flags);
  std::vector<std::string> combos;
  grid->add_option("--grid", combos, "Combinations m:k, comma separated")->delimiter(',');

  auto* noise = app.add_subcommand("noise-sweep", "Sweep oracle noise levels");
  add_experiment_flags(noise, noise_flags);
  std::vector<double> sigmas;
  noise->add_option("--sigmas", sigmas, "Noise levels, comma separated")->delimiter(',');

  VarianceFlags vflags;
  auto* variance = app.add_subcommand("variance-check", "Estimate M1/M2 and check the variance bounds");
  variance->add_option("--function", vflags.function, "quadratic or rosenbrock");
  variance->add_option("--dim", vflags.dim, "Dimension")->check(CLI::PositiveNumber);
  variance->add_option("--mu", vflags.mu, "Smoothing radius")->check(CLI::PositiveNumber);
  variance->add_option("--samples", vflags.samples, "Monte Carlo samples for M1/M2")
      ->check(CLI::Range(kMinMetricSamples, std::numeric_limits<std::int64_t>::max()));
  variance->add_option("--moment-samples", vflags.moment_samples, "Batches for the second moment")
      ->check(CLI::Range(kMinMetricSamples, std::numeric_limits<std::int64_t>::max()));
  variance->add_option("--seed", vflags.seed, "Seed");
  variance->add_option("--location", vflags.location, "zero, ones or random");
  variance->add_option("--pairs", vflags.pairs, "(m,k) pairs m:k for the second-moment check")->delimiter(',');
  variance->add_option("--out", vflags.out, "Also write variance.jsonl here");

  auto* presets = app.add_subcommand("presets", "List built-in presets");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_flags);
    if (*grid) return cmd_grid(grid_flags, combos);
    if (*noise) return cmd_noise(noise_flags, sigmas);
    if (*variance) return cmd_variance(vflags);
    if (*presets) {
      for (const auto& name : preset_names()) std::cout << name << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
