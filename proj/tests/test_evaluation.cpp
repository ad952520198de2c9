#include <doctest.h>

#include "fimeq/approx_mdp.hpp"
#include "fimeq/ergodicity.hpp"
#include "fimeq/evaluation.hpp"
#include "fimeq/experiment.hpp"
#include "fimeq/filter.hpp"
#include "oracles.hpp"

using namespace fimeq;

namespace {

PomdpModel patched(const PomdpModel& base, const char* key, const char* value) {
    auto j = to_json(base);
    j[key] = nlohmann::json::parse(value);
    return parse_model(j);
}

WindowPolicy constant_policy(const PomdpModel& m, int n, int action) {
    const WindowCodec codec(n, m);
    WindowPolicy p;
    p.window_length = n;
    p.action.assign(static_cast<std::size_t>(codec.size()), action);
    p.defined.assign(static_cast<std::size_t>(codec.size()), 1);
    return p;
}

WindowPolicy random_policy(std::mt19937_64& rng, const PomdpModel& m, int n) {
    WindowPolicy p = constant_policy(m, n, 0);
    std::uniform_int_distribution<int> pick(0, m.num_actions() - 1);
    for (int& a : p.action) a = pick(rng);
    return p;
}

WindowPolicy solved_policy(const PomdpModel& m, int n) {
    const Belief ps = stationary_distribution(m, ExplorationPolicy::uniform(m.num_actions()));
    return value_iteration(build_approx_mdp(m, ps, n), 1e-9).policy;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("warm-up law matches window probabilities") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const PomdpModel m = oracle::random_model(rng, 3, 2, 2, 0.2);
        const ExplorationPolicy sigma({0.35, 0.65});
        for (int n = 0; n <= 3; ++n) {
            const auto d = warmup_distribution(m, n, sigma);
            const WindowCodec codec(n, m);
            double total = 0.0;
            for (std::int64_t c = 0; c < codec.size(); ++c) {
                double marginal = 0.0;
                for (int x = 0; x < 3; ++x) marginal += d[x * codec.size() + c];
                total += marginal;
                CHECK(marginal == doctest::Approx(window_probability(m, m.prior(), codec.decode(c), sigma)).epsilon(1e-12));
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("trivial policy values") {
    const PomdpModel r3 = gen_example("repair3");
    const auto sigma = ExplorationPolicy::uniform(2);
    SUBCASE("zero cost") {
        const PomdpModel m = patched(r3, "cost", "[[0,0],[0,0]]");
        CHECK(evaluate_window_policy(m, constant_policy(m, 2, 1), sigma) == 0.0);
    }
    SUBCASE("constant cost") {
        const PomdpModel m = patched(r3, "cost", "[[1,1],[1,1]]");
        std::mt19937_64 rng(1);
        for (int n = 0; n <= 2; ++n)
            CHECK(evaluate_window_policy(m, random_policy(rng, m, n), sigma) == doctest::Approx(5.0).epsilon(1e-12));
    }
}

TEST_CASE("linear solve agrees with the dense iteration oracle") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 15; ++rep) {
        const PomdpModel m = oracle::random_model(rng, 2 + rep % 2, 2, 2, 0.2, 0.7);
        const ExplorationPolicy sigma({0.4, 0.6});
        for (int n = 0; n <= 2; ++n) {
            const WindowPolicy p = random_policy(rng, m, n);
            CHECK(evaluate_window_policy(m, p, sigma) ==
                  doctest::Approx(oracle::window_policy_value(m, p, sigma, 200)).epsilon(1e-10));
        }
    }
}

TEST_CASE("linear solve agrees with Monte Carlo on repair3") {
    const PomdpModel r3 = gen_example("repair3");
    const auto sigma = ExplorationPolicy::uniform(2);
    const WindowPolicy p = solved_policy(r3, 1);
    const double exact = evaluate_window_policy(r3, p, sigma);
    const MonteCarloEstimate mc = monte_carlo_window_policy(r3, p, sigma, 1'000'000, 99);
    CHECK(std::abs(mc.mean - exact) < 3.0 * mc.standard_error);
    CHECK(std::pow(r3.discount(), mc.horizon) * r3.cost_sup() / (1 - r3.discount()) < 1e-4);
    CHECK(std::pow(r3.discount(), mc.horizon - 1) * r3.cost_sup() / (1 - r3.discount()) >= 1e-4);
}

TEST_CASE("reachable window without an action is a policy gap") {
    const PomdpModel r3 = gen_example("repair3");
    WindowPolicy p = constant_policy(r3, 1, 0);
    p.defined[3] = 0;
    CHECK_THROWS_AS(evaluate_window_policy(r3, p, ExplorationPolicy::uniform(2)), PolicyGap);

    // A window that can never occur may stay undefined.
    const PomdpModel sticky = patched(patched(r3, "channel", "[[1,0],[0,1]]"), "transition",
                                      "[[[1,0],[1,0]],[[0,1],[0,1]]]");
    WindowPolicy q = constant_policy(sticky, 1, 0);
    const std::int64_t impossible = WindowCodec(1, sticky).encode({{1, 0}, {0}});
    q.defined[impossible] = 0;
    CHECK_NOTHROW(evaluate_window_policy(sticky, q, ExplorationPolicy::uniform(2)));
}

TEST_CASE("belief grid solver") {
    const PomdpModel r3 = gen_example("repair3");
    SUBCASE("identity channel matches the fully observed MDP") {
        const PomdpModel m = patched(r3, "channel", "[[1,0],[0,1]]");
        BeliefGridSolver g(m, 101);
        g.solve(1e-12);
        const auto v = oracle::observed_mdp_value(m);
        for (int x = 0; x < 2; ++x) CHECK(g.value(Belief::dirac(2, x)) == doctest::Approx(v[x]).epsilon(1e-6));
        CHECK(g.prior_value(m.prior()) == doctest::Approx(0.5 * v[0] + 0.5 * v[1]).epsilon(1e-6));
    }
    SUBCASE("three hidden states with an identity channel") {
        std::mt19937_64 rng(4);
        PomdpModel m = oracle::random_model(rng, 3, 3, 2);
        m = patched(m, "channel", "[[1,0,0],[0,1,0],[0,0,1]]");
        BeliefGridSolver g(m, 21);
        g.solve(1e-12);
        const auto v = oracle::observed_mdp_value(m);
        for (int x = 0; x < 3; ++x) CHECK(g.value(Belief::dirac(3, x)) == doctest::Approx(v[x]).epsilon(1e-6));
    }
    SUBCASE("zero cost") {
        const PomdpModel m = patched(r3, "cost", "[[0,0],[0,0]]");
        CHECK(belief_grid_optimal(m, m.prior(), 51).value == 0.0);
    }
    SUBCASE("interpolation is exact at grid points") {
        BeliefGridSolver g(r3, 11);
        g.solve();
        for (std::size_t i = 0; i < g.num_points(); ++i)
            CHECK(g.value(g.grid_points()[i]) == doctest::Approx(g.grid_values()[i]).epsilon(1e-13));
    }
    SUBCASE("three-state grid is exact at grid points") {
        std::mt19937_64 rng(6);
        const PomdpModel m = oracle::random_model(rng, 3, 2, 2);
        BeliefGridSolver g(m, 9);
        g.solve();
        CHECK(g.num_points() == 45);
        for (std::size_t i = 0; i < g.num_points(); ++i)
            CHECK(g.value(g.grid_points()[i]) == doctest::Approx(g.grid_values()[i]).epsilon(1e-13));
    }
    SUBCASE("repair3 refinement and lower-bound property") {
        const GridOptimum a = belief_grid_optimal(r3, r3.prior(), 2001);
        const GridOptimum b = belief_grid_optimal(r3, r3.prior(), 4001);
        CHECK(std::abs(a.value - b.value) < 1e-3);
        const auto sigma = ExplorationPolicy::uniform(2);
        std::mt19937_64 rng(12);
        BeliefGridSolver g(r3, 2001);
        g.solve();
        for (int n = 0; n <= 2; ++n) {
            CHECK(a.value <= evaluate_window_policy(r3, solved_policy(r3, n), sigma) + 1e-3);
            for (int rep = 0; rep < 5; ++rep) {
                // Cost from time N is compared against the optimum at the time-N posterior.
                const auto d = warmup_distribution(r3, n, sigma);
                const WindowCodec codec(n, r3);
                double opt = 0.0;
                for (std::int64_t c = 0; c < codec.size(); ++c) {
                    const double p = d[c] + d[codec.size() + c];
                    if (p > 0) opt += p * g.value(window_posterior(r3, r3.prior(), codec.decode(c)));
                }
                CHECK(opt <= evaluate_window_policy(r3, random_policy(rng, r3, n), sigma) + 1e-3);
            }
        }
    }
    SUBCASE("guards") {
        std::mt19937_64 rng(1);
        CHECK_THROWS_AS(BeliefGridSolver(oracle::random_model(rng, 4, 2, 2), 11), GuardViolation);
        CHECK_THROWS_AS(BeliefGridSolver(r3, 1), GuardViolation);
    }
}

TEST_CASE("bound arithmetic") {
    CHECK(robustness_bound(4.0, 0.8, 0.3) == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(value_bound(4.0, 0.8, 0.3) == doctest::Approx(30.0).epsilon(1e-12));
}

TEST_CASE("bound report") {
    const auto sigma = ExplorationPolicy::uniform(2);
    SUBCASE("identity channel has zero bound and zero loss") {
        const PomdpModel m = perfect_channel_example();
        const Belief ps = stationary_distribution(m, sigma);
        const BoundReport r = bound_report(m, ps, {0, 1, 2}, sigma, {401, 20, 1e-10});
        for (const auto& row : r.rows) {
            CHECK(row.L == 0.0);
            CHECK(row.bound_robust == 0.0);
            CHECK(std::abs(row.loss) <= 1e-6);
        }
    }
    SUBCASE("repair3 losses sit under the bounds") {
        const PomdpModel r3 = gen_example("repair3");
        const Belief ps = stationary_distribution(r3, sigma);
        const BoundReport r = bound_report(r3, ps, {0, 1, 2, 3}, sigma, {2001, 100, 1e-9});
        REQUIRE(r.rows.size() == 4);
        for (std::size_t i = 0; i < r.rows.size(); ++i) {
            const auto& row = r.rows[i];
            CHECK(row.loss <= row.bound_robust + 1e-3);
            CHECK(row.value_gap <= row.bound_value + row.value_gap_delta + 1e-3);
            CHECK(row.bound_robust == doctest::Approx(2.0 * 4.0 * row.L / 0.04));
            if (i > 0) CHECK(row.loss <= r.rows[i - 1].loss + 1e-6);
        }
        const std::string csv = bounds_to_csv(r);
        CHECK(csv.rfind("N,loss,L,bound_robust,bound_value\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    }
}

}
