#include <doctest.h>

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "zorank/optimizer.hpp"

using namespace zorank;
using namespace std::chrono_literals;

namespace {

double sphere(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

/// Oracle that replays a scripted outcome and counts calls.
class ScriptedOracle final : public RankingOracle {
public:
  explicit ScriptedOracle(std::vector<std::int64_t> one_based) : answer_(std::move(one_based)) {}

protected:
  RankingOutcome do_rank(const OracleRequest& request) override {
    return RankingOutcome::from_one_based(request.m(), answer_);
  }

private:
  std::vector<std::int64_t> answer_;
};

OptimizerConfig plain_config(double eta, double mu, std::size_t m, std::size_t k, std::int64_t t) {
  OptimizerConfig c;
  c.eta = eta;
  c.mu = mu;
  c.m = m;
  c.k = k;
  c.iterations = t;
  return c;
}

}  // namespace

TEST_SUITE("OptimizerConfig") {
  TEST_CASE("validation names the field") {
    auto expect_field = [](OptimizerConfig c, const std::string& field) {
      try {
        c.validate();
        FAIL("expected invalid_argument for " << field);
      } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).rfind(field, 0) == 0);
      }
    };
    expect_field(plain_config(0.0, 0.1, 4, 2, 1), "eta");
    expect_field(plain_config(1.0, -0.1, 4, 2, 1), "mu");
    expect_field(plain_config(1.0, 0.1, 1, 1, 1), "m");
    expect_field(plain_config(1.0, 0.1, 4, 5, 1), "k");
    expect_field(plain_config(1.0, 0.1, 4, 0, 1), "k");
    expect_field(plain_config(1.0, 0.1, 4, 2, -1), "iterations");
    auto ls = plain_config(1.0, 0.1, 4, 2, 1);
    ls.line_search = LineSearchConfig{1, 0.5};
    expect_field(ls, "line_search.trials");
    ls.line_search = LineSearchConfig{3, 1.0};
    expect_field(ls, "line_search.gamma");
    auto dc = plain_config(1.0, 0.1, 4, 2, 1);
    dc.decay = 0.0;
    expect_field(dc, "decay");
  }

  TEST_CASE("theorem schedule") {
    const auto c = OptimizerConfig::theorem_schedule(100, 10000, 10, 10);
    CHECK(c.eta == doctest::Approx(1e-3));
    CHECK(c.mu == doctest::Approx(0.1));
    const auto c2 = OptimizerConfig::theorem_schedule(4, 100, 5, 2, 2.0);
    CHECK(c2.mu == doctest::Approx(std::sqrt(4.0 / (4.0 * 100.0))));
  }
}

TEST_SUITE("zo_rank_sgd_step") {
  TEST_CASE("hand-executed step on f = x^2") {
    // Candidates 10.0001 and 9.9999: the second ranks first, so the estimate
    // is (1)(+1) + (-1)(-1) over one edge = 2 and x moves to 10 - 2 = 8.
    const PerturbationBatch batch(Vector{10.0}, 1e-4, {Vector{1.0}, Vector{-1.0}});
    ExactOracle oracle(sphere);
    const auto result = zo_rank_sgd_step(batch, plain_config(1.0, 1e-4, 2, 1, 1), oracle);
    CHECK(result.point[0] == doctest::Approx(8.0).epsilon(1e-15));
    CHECK(result.record.gradient_norm == doctest::Approx(2.0));
    CHECK(result.record.queries == 2);
  }

  TEST_CASE("identical directions give a zero step") {
    const PerturbationBatch batch(Vector{1.0, 2.0}, 0.1, {Vector{0.3, -0.2}, Vector{0.3, -0.2}});
    ExactOracle oracle(sphere);
    const auto result = zo_rank_sgd_step(batch, plain_config(1.0, 0.1, 2, 1, 1), oracle);
    CHECK(result.point == Vector{1.0, 2.0});
  }

  TEST_CASE("m=2, k=1 rank step equals the pairwise step bit for bit") {
    Rng gen(42);
    for (int trial = 0; trial < 200; ++trial) {
      const Vector x = gen.normal_vector(5);
      const auto config = plain_config(0.3, 0.05, 2, 1, 1);
      Rng a(1000 + trial), b(1000 + trial);
      ExactOracle oa(sphere), ob(sphere);
      const auto rank_step = zo_rank_sgd_step(x, config, oa, a);
      const auto pair_step = pairwise_sgd_step(x, config, ob, b);
      REQUIRE(rank_step.point == pair_step.point);
      REQUIRE(oa.queries() == ob.queries());
    }
  }

  TEST_CASE("oracle that answers with the wrong shape is rejected") {
    ScriptedOracle wrong({1, 2, 3});
    const PerturbationBatch batch(Vector{0.0}, 0.1, {Vector{1.0}, Vector{-1.0}});
    CHECK_THROWS(zo_rank_sgd_step(batch, plain_config(1.0, 0.1, 2, 1, 1), wrong));
  }
}

TEST_SUITE("line_search_step") {
  TEST_CASE("picks the middle candidate") {
    // Candidates e1, 0.9 e1, 0.99 e1 on ||x||^2: 0.9 e1 wins (exponent 1).
    ExactOracle oracle(sphere);
    const auto ls = line_search_step(Vector{1.0, 0.0}, Vector{1.0, 0.0}, 1.0, 0.1, 3, oracle);
    REQUIRE(ls.exponent.has_value());
    CHECK(*ls.exponent == 1);
    CHECK(ls.point[0] == doctest::Approx(0.9));
    CHECK(oracle.queries() == 3);
  }

  TEST_CASE("keeps x when every step is worse") {
    ExactOracle oracle(sphere);
    const auto ls = line_search_step(Vector{0.0}, Vector{1.0}, 1.0, 0.5, 4, oracle);
    CHECK_FALSE(ls.exponent.has_value());
    CHECK(ls.point == Vector{0.0});
  }

  TEST_CASE("argument checks") {
    ExactOracle oracle(sphere);
    CHECK_THROWS_AS(line_search_step(Vector{0.0}, Vector{1.0}, 1.0, 0.5, 1, oracle),
                    std::invalid_argument);
    CHECK_THROWS_AS(line_search_step(Vector{0.0}, Vector{1.0}, 1.0, 1.5, 3, oracle),
                    std::invalid_argument);
  }
}

TEST_SUITE("zo_sgd_step") {
  TEST_CASE("linear objective recovers <c, xi> xi") {
    const Vector c{2.0, -1.0};
    ValueOracle values([&](std::span<const double> x) { return c[0] * x[0] + c[1] * x[1]; });
    const std::vector<Vector> dirs = {{1.0, 3.0}};
    const auto result = zo_sgd_step(Vector{0.0, 0.0}, dirs, plain_config(1.0, 0.5, 2, 1, 1), values);
    // <c, xi> = -1, so g = -xi and x - g = xi.
    CHECK(result.point[0] == doctest::Approx(1.0));
    CHECK(result.point[1] == doctest::Approx(3.0));
    CHECK(values.queries() == 2);
  }

  TEST_CASE("constant objective gives a zero step") {
    ValueOracle values([](std::span<const double>) { return 5.0; });
    Rng rng(1);
    const auto result = zo_sgd_step(Vector{1.0, 1.0}, plain_config(1.0, 0.1, 4, 1, 1), values, rng);
    CHECK(result.point == Vector{1.0, 1.0});
    CHECK(result.record.queries == 4);
  }

  TEST_CASE("quadratic in one dimension") {
    // f = x^2 at x = 1, xi = 1, mu = 0.1: slope (1.21 - 1)/0.1 = 2.1.
    ValueOracle values(sphere);
    const std::vector<Vector> dirs = {{1.0}};
    const auto result = zo_sgd_step(Vector{1.0}, dirs, plain_config(0.1, 0.1, 2, 1, 1), values);
    CHECK(result.record.gradient_norm == doctest::Approx(2.1));
    CHECK(result.point[0] == doctest::Approx(1.0 - 0.21));
  }
}

TEST_SUITE("run") {
  TEST_CASE("zero iterations returns x0 and no queries") {
    ExactOracle oracle(sphere);
    Rng rng(1);
    RunOptions options;
    options.reporting_objective = sphere;
    const auto traj = run(plain_config(1.0, 0.1, 4, 2, 0), oracle, Vector{1.0, 2.0}, rng, options);
    CHECK(traj.records.empty());
    CHECK(traj.final_point == Vector{1.0, 2.0});
    CHECK(traj.total_queries == 0);
    CHECK(*traj.initial_f == 5.0);
  }

  TEST_CASE("metering with line search is (m + l) per iteration") {
    auto config = plain_config(0.5, 0.01, 6, 3, 25);
    config.line_search = LineSearchConfig{5, 0.1};
    ExactOracle oracle(sphere);
    Rng rng(3);
    const auto traj = run(config, oracle, Vector(10, 1.0), rng);
    CHECK(traj.records.size() == 25);
    CHECK(traj.total_queries == (6 + 5) * 25);
    CHECK(oracle.queries() == traj.total_queries);
    CHECK(traj.records.back().cumulative_queries == traj.total_queries);
  }

  TEST_CASE("decay shrinks eta and mu geometrically") {
    auto config = plain_config(1.0, 0.1, 4, 2, 101);
    config.decay = 0.99;
    ExactOracle oracle(sphere);
    Rng rng(3);
    const auto traj = run(config, oracle, Vector(3, 1.0), rng);
    CHECK(traj.records[100].eta == doctest::Approx(std::pow(0.99, 100)));
    CHECK(traj.records[100].mu == doctest::Approx(0.1 * std::pow(0.99, 100)));
  }

  TEST_CASE("same seed, same trajectory") {
    auto config = plain_config(0.2, 0.01, 5, 2, 30);
    auto once = [&] {
      ExactOracle oracle(sphere);
      Rng rng(77);
      return run(config, oracle, Vector(4, 1.0), rng).final_point;
    };
    CHECK(once() == once());
  }

  TEST_CASE("exact oracle with line search never increases f") {
    auto config = plain_config(2.0, 0.01, 8, 4, 60);
    config.line_search = LineSearchConfig{5, 0.3};
    ExactOracle oracle(sphere);
    Rng rng(9);
    RunOptions options;
    options.reporting_objective = sphere;
    const auto traj = run(config, oracle, Vector(20, 1.0), rng, options);
    double prev = *traj.initial_f;
    for (const auto& rec : traj.records) {
      CHECK(*rec.f_value <= prev);
      prev = *rec.f_value;
    }
    CHECK(prev < *traj.initial_f);
  }

  TEST_CASE("query budget stops the run") {
    ExactOracle oracle(sphere);
    Rng rng(1);
    RunOptions options;
    options.stop.max_queries = 35;
    const auto traj = run(plain_config(0.1, 0.01, 10, 2, 100), oracle, Vector(3, 1.0), rng, options);
    CHECK(traj.records.size() == 4);
  }

  TEST_CASE("errors are captured with the prefix kept") {
    int calls = 0;
    Objective exploding = [&](std::span<const double> x) {
      return ++calls > 20 ? std::numeric_limits<double>::quiet_NaN() : sphere(x);
    };
    ExactOracle oracle(exploding);
    Rng rng(1);
    const auto traj = run(plain_config(0.1, 0.01, 4, 2, 100), oracle, Vector(3, 1.0), rng);
    REQUIRE(traj.error.has_value());
    CHECK(traj.records.size() == 5);
  }

  TEST_CASE("zo-sgd needs a value oracle and meters m per iteration") {
    ExactOracle oracle(sphere);
    Rng rng(1);
    RunOptions options;
    options.algorithm = Algorithm::ZoSgd;
    const auto config = plain_config(0.01, 0.01, 5, 1, 10);
    CHECK_THROWS_AS(run(config, oracle, Vector(3, 1.0), rng, options), std::invalid_argument);
    ValueOracle values(sphere);
    const auto traj = run(config, oracle, Vector(3, 1.0), rng, options, &values);
    CHECK(traj.total_queries == 50);
    CHECK(values.queries() == 50);
  }

  TEST_CASE("algorithm names round trip") {
    for (Algorithm a : {Algorithm::ZoRankSgd, Algorithm::PairwiseSgd, Algorithm::ZoSgd}) {
      CHECK(parse_algorithm(to_string(a)) == a);
    }
    CHECK_THROWS_AS(parse_algorithm("adam"), std::invalid_argument);
  }
}

TEST_SUITE("interactive") {
  InteractiveConfig small_config() {
    InteractiveConfig c;
    c.eta = 1.0;
    c.mu = 0.1;
    c.gamma = 0.5;
    c.m = 3;
    c.k = 3;
    return c;
  }

  TEST_CASE("selection candidates in order") {
    auto state = InteractiveState::initial(Vector{1.0});
    state.batch_best = Vector{0.7};
    state.gradient_memory = Vector{2.0};
    state.phase = InteractivePhase::LineSearch;
    const auto cands = interactive_selection_candidates(state, small_config());
    REQUIRE(cands.size() == 4);
    CHECK(cands[0] == Vector{1.0});
    CHECK(cands[1] == Vector{0.7});
    CHECK(cands[2] == Vector{-1.0});
    CHECK(cands[3] == Vector{0.0});
  }

  TEST_CASE("ranking then selection of a step moves x* and clears memory") {
    const auto config = small_config();
    auto state = InteractiveState::initial(Vector{1.0});
    const PerturbationBatch batch(Vector{1.0}, 0.1, {Vector{1.0}, Vector{-1.0}, Vector{0.0}});
    state = apply_ranking(state, batch, RankingOutcome::from_one_based(3, {2, 3, 1}));
    CHECK(state.phase == InteractivePhase::LineSearch);
    CHECK(state.tau == 1);
    CHECK(state.batch_best == Vector{0.9});
    // Weights (-2, 0, 2) for candidates ranked (2,3,1) over 3 edges.
    CHECK(state.gradient_memory[0] == doctest::Approx((2.0 * 1.0 - 2.0 * -1.0) / 3.0));
    const auto moved = apply_selection(state, config, 3);
    CHECK(moved.phase == InteractivePhase::GradientEstimation);
    CHECK(moved.best_point[0] == doctest::Approx(1.0 - 0.5 * 4.0 / 3.0));
    CHECK(moved.tau == 0);
    CHECK(moved.gradient_memory == Vector{0.0});
  }

  TEST_CASE("keeping x* accumulates a running mean") {
    const auto config = small_config();
    auto state = InteractiveState::initial(Vector{0.0});
    const PerturbationBatch b1(Vector{0.0}, 0.1, {Vector{1.0}, Vector{-1.0}, Vector{0.0}});
    const PerturbationBatch b2(Vector{0.0}, 0.1, {Vector{3.0}, Vector{-1.0}, Vector{0.0}});
    const auto top_first = RankingOutcome::from_one_based(3, {1, 2, 3});
    state = apply_ranking(state, b1, top_first);
    const double g1 = state.gradient_memory[0];
    state = apply_selection(state, config, 0);
    CHECK(state.best_point == Vector{0.0});
    state = apply_ranking(state, b2, top_first);
    const double g2 = estimate_gradient(b2, top_first).vector[0];
    CHECK(state.tau == 2);
    CHECK(state.gradient_memory[0] == doctest::Approx((g1 + g2) / 2.0));
  }

  TEST_CASE("phase guards") {
    auto state = InteractiveState::initial(Vector{0.0});
    CHECK_THROWS_AS(apply_selection(state, small_config(), 0), std::logic_error);
    state.phase = InteractivePhase::LineSearch;
    const PerturbationBatch b(Vector{0.0}, 0.1, {Vector{1.0}, Vector{-1.0}});
    CHECK_THROWS_AS(apply_ranking(state, b, RankingOutcome::from_one_based(2, {1})),
                    std::logic_error);
    CHECK_THROWS_AS(apply_selection(state, small_config(), 4), std::invalid_argument);
  }

  TEST_CASE("interactive_step drives the exact oracle downhill") {
    auto config = small_config();
    config.m = 6;
    config.k = 6;
    ExactOracle oracle(sphere);
    Rng rng(5);
    auto state = InteractiveState::initial(Vector(4, 3.0));
    const double start = sphere(state.best_point);
    for (int i = 0; i < 200; ++i) {
      const auto r = interactive_step(state, config, oracle, oracle, rng);
      REQUIRE(r.status == StepStatus::Advanced);
      state = r.state;
    }
    CHECK(sphere(state.best_point) < 0.1 * start);
  }

  TEST_CASE("timeout leaves state and rng untouched") {
    auto box = std::make_shared<Mailbox>();
    DeferredOracle oracle(box, 2ms);
    Rng rng(5);
    const Rng before = rng;
    const auto state = InteractiveState::initial(Vector{1.0, 1.0});
    const auto r = interactive_step(state, small_config(), oracle, oracle, rng);
    CHECK(r.status == StepStatus::Pending);
    CHECK(serialize_state(r.state) == serialize_state(state));
    CHECK(rng == before);
  }

  TEST_CASE("malformed answer is rejected without side effects") {
    ScriptedOracle wrong({1, 2, 3, 4});
    Rng rng(5);
    const Rng before = rng;
    const auto state = InteractiveState::initial(Vector{1.0});
    const auto r = interactive_step(state, small_config(), wrong, wrong, rng);
    CHECK(r.status == StepStatus::Rejected);
    CHECK(r.state == state);
    CHECK(rng == before);
  }

  TEST_CASE("serialized state is byte-stable") {
    auto s = InteractiveState::initial(Vector{1.5, -2.0});
    const std::string a = serialize_state(s);
    CHECK(a.size() == 8 * (1 + 2) * 3 + 16);
    s.tau = 1;
    CHECK(serialize_state(s) != a);
  }
}

TEST_SUITE("trajectory export") {
  TEST_CASE("header and records") {
    ExactOracle oracle(sphere);
    Rng rng(1);
    auto config = plain_config(0.1, 0.01, 4, 2, 3);
    config.line_search = LineSearchConfig{3, 0.5};
    RunOptions options;
    options.reporting_objective = sphere;
    const auto traj = run(config, oracle, Vector(2, 1.0), rng, options);
    std::ostringstream out;
    write_trajectory(out, traj);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    const auto header = nlohmann::json::parse(line);
    CHECK(header["format"] == "zorank-trajectory");
    CHECK(header["version"] == 1);
    int n = 0;
    while (std::getline(in, line)) {
      const auto rec = nlohmann::json::parse(line);
      ++n;
      CHECK(rec["t"] == n);
      CHECK(rec["queries"] == 7);
      CHECK(rec["cumulative_queries"] == 7 * n);
      CHECK(rec["f"].is_number());
      CHECK(rec.contains("exponent"));
    }
    CHECK(n == 3);
  }
}
