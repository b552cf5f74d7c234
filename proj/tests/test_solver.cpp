#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include <gtest/gtest.h>

#include "climbing/solver.hpp"
#include "climbing/synthetic.hpp"
#include "dense_solve.hpp"
#include "oracles.hpp"

using namespace climbing;
using testing_support::Layout;

namespace {

CleanDataset make_dataset(std::vector<RouteInfo> routes, std::size_t n_climbers, std::vector<AscentRecord> ascents) {
    CleanDataset data;
    data.routes = std::move(routes);
    for (std::size_t c = 0; c < n_climbers; ++c) data.climbers.push_back("c" + std::to_string(c));
    data.ascents = std::move(ascents);
    return data;
}

// One climber, one route at grade g0, 3 successes and 2 failures in one week.
CleanDataset one_by_one_fixture() {
    std::vector<AscentRecord> ascents;
    for (int i = 0; i < 3; ++i) ascents.push_back({0, 0, 10, Outcome::Success});
    for (int i = 0; i < 2; ++i) ascents.push_back({0, 0, 10, Outcome::Failure});
    return make_dataset({{"r0", 22}}, 1, ascents);
}

// Two climbers and two routes with a pattern symmetric under swapping both.
CleanDataset symmetric_fixture() {
    return make_dataset({{"r0", 22}, {"r1", 22}}, 2,
                        {{0, 0, 5, Outcome::Success},
                         {0, 1, 5, Outcome::Failure},
                         {1, 0, 5, Outcome::Failure},
                         {1, 1, 5, Outcome::Success},
                         {0, 0, 5, Outcome::Failure},
                         {1, 1, 5, Outcome::Failure}});
}

FitOptions tight() {
    FitOptions o;
    o.tolerance = 1e-12;
    o.max_iterations = 5000;
    return o;
}

} // namespace

TEST(InitializeState, RatingsStartAtPriorMeans) {
    const auto data = make_dataset({{"a", 22}, {"b", 25}}, 2,
                                   {{0, 0, 3, Outcome::Success},
                                    {0, 1, 7, Outcome::Failure},
                                    {1, 1, 3, Outcome::Failure},
                                    {1, 0, 3, Outcome::Success}});
    const auto state = initialize_state(data, Hyperparameters{});
    EXPECT_EQ(state.routes[0].rating, 0.0);
    EXPECT_NEAR(state.routes[1].rating, 1.2, 1e-12);
    EXPECT_NEAR(state.routes[1].prior_mean, 1.2, 1e-12);
    for (const auto& c : state.climbers) {
        for (double r : c.ratings) EXPECT_EQ(r, 0.0);
    }
    EXPECT_EQ(state.climbers[0].weeks, (std::vector<Week>{3, 7}));
    EXPECT_EQ(state.climbers[1].weeks, (std::vector<Week>{3}));
}

TEST(InitializeState, CrossReferencesAgree) {
    std::mt19937_64 gen(21);
    for (int trial = 0; trial < 20; ++trial) {
        const auto data = testing_support::random_small_instance(gen, 6);
        const auto state = initialize_state(data, Hyperparameters{});
        std::size_t from_climbers = 0;
        std::size_t from_routes = 0;
        std::multiset<std::tuple<EntityIndex, EntityIndex, Week, Outcome>> a, b, expected;
        for (const auto& x : data.ascents) expected.insert({x.climber, x.route, x.week, x.outcome});
        for (std::size_t c = 0; c < state.climbers.size(); ++c) {
            const auto& h = state.climbers[c];
            ASSERT_EQ(h.weeks.size(), h.ratings.size());
            for (std::size_t k = 0; k + 1 < h.weeks.size(); ++k) EXPECT_LT(h.weeks[k], h.weeks[k + 1]);
            for (std::size_t k = 0; k < h.weeks.size(); ++k) {
                EXPECT_FALSE(h.period_ascents[k].empty());
                for (const auto& ref : h.period_ascents[k]) {
                    a.insert({static_cast<EntityIndex>(c), ref.route, h.weeks[k], ref.outcome});
                    ++from_climbers;
                }
            }
        }
        for (std::size_t r = 0; r < state.routes.size(); ++r) {
            for (const auto& ref : state.routes[r].ascents) {
                b.insert({ref.climber, static_cast<EntityIndex>(r), state.climbers[ref.climber].weeks[ref.period],
                          ref.outcome});
                ++from_routes;
            }
        }
        EXPECT_EQ(from_climbers, data.ascents.size());
        EXPECT_EQ(from_routes, data.ascents.size());
        EXPECT_EQ(a, expected);
        EXPECT_EQ(b, expected);
    }
}

TEST(InitializeState, EmptyDatasetThrows) {
    CleanDataset empty;
    EXPECT_THROW(initialize_state(empty, Hyperparameters{}), EmptyDatasetError);
}

TEST(UpdateRoute, SymmetricEvidenceLeavesRatingAtPrior) {
    const auto data = make_dataset({{"r", 22}}, 2, {{0, 0, 1, Outcome::Success}, {1, 0, 1, Outcome::Failure}});
    const auto state = initialize_state(data, Hyperparameters{});
    EXPECT_NEAR(update_route(state.routes[0], state), 0.0, 1e-15);
}

TEST(UpdateRoute, ConvergesToOneDimensionalGridMaximum) {
    const auto data = make_dataset({{"r", 22}}, 1, {{0, 0, 1, Outcome::Failure}});
    auto state = initialize_state(data, Hyperparameters{});
    for (int i = 0; i < 50; ++i) state.routes[0].rating = update_route(state.routes[0], state);

    // log f(r) = log(1 - sigmoid(0 - r)) - r^2 / (2 * 4), grid over [-10, 10] at 1e-4.
    double best = -10.0;
    double best_value = -INFINITY;
    for (int i = 0; i <= 200000; ++i) {
        const double r = -10.0 + 1e-4 * i;
        const double v = std::log(1.0 - 1.0 / (1.0 + std::exp(r))) - r * r / 8.0;
        if (v > best_value) {
            best_value = v;
            best = r;
        }
    }
    EXPECT_NEAR(state.routes[0].rating, best, 1e-3);
    EXPECT_GT(state.routes[0].rating, 0.0);
}

TEST(UpdateRoute, AllSuccessesMakeRouteEasier) {
    const auto data = make_dataset({{"r", 22}}, 3,
                                   {{0, 0, 1, Outcome::Success}, {1, 0, 1, Outcome::Success}, {2, 0, 1, Outcome::Success}});
    const auto state = initialize_state(data, Hyperparameters{});
    EXPECT_LT(update_route(state.routes[0], state), 0.0);
}

TEST(UpdateRoute, StepIsClampedToTenUnits) {
    Hyperparameters hyper;
    hyper.sigma_r_sq = 1e8;
    std::vector<AscentRecord> ascents;
    for (EntityIndex c = 0; c < 200; ++c) ascents.push_back({c, 0, 1, Outcome::Success});
    auto data = make_dataset({{"r", 22}}, 200, ascents);
    auto state = initialize_state(data, hyper);
    for (auto& c : state.climbers) c.ratings[0] = 60.0;
    state.routes[0].rating = 30.0;
    // Newton wants a step far larger than 10 units here.
    EXPECT_NEAR(update_route(state.routes[0], state), 20.0, 1e-12);
}

TEST(UpdateClimber, SinglePeriodIsScalarNewton) {
    const auto data = make_dataset({{"r0", 20}, {"r1", 25}}, 1,
                                   {{0, 0, 1, Outcome::Success}, {0, 1, 1, Outcome::Failure}, {0, 1, 1, Outcome::Success}});
    auto state = initialize_state(data, Hyperparameters{});
    state.climbers[0].ratings[0] = 0.3;
    const auto updated = update_climber(state.climbers[0], state);
    ASSERT_EQ(updated.size(), 1u);

    double d1 = -0.3 / 1.0, d2 = -1.0;
    for (const auto& [route, win] : std::vector<std::pair<int, bool>>{{0, true}, {1, false}, {1, true}}) {
        const double p = 1.0 / (1.0 + std::exp(state.routes[static_cast<std::size_t>(route)].rating - 0.3));
        d1 += (win ? 1.0 : 0.0) - p;
        d2 -= p * (1.0 - p);
    }
    EXPECT_NEAR(updated[0], 0.3 - d1 / d2, 1e-12);
}

namespace {

// Newton step for one climber computed from finite-difference derivatives of
// the oracle log-posterior and a dense linear solve.
std::vector<double> dense_newton_step(const CleanDataset& data, const Hyperparameters& hyper,
                                      const ModelState& state, std::size_t climber) {
    const Layout layout(data);
    auto params = testing_support::flatten(state, layout);
    const std::size_t offset = layout.climber_offset[climber];
    const std::size_t n = layout.climber_weeks[climber].size();
    const double h = 1e-4;
    auto f = [&](std::vector<double>& p) { return testing_support::log_posterior(data, hyper, layout, p); };
    std::vector<double> grad(n);
    testing_support::Matrix hess(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        auto p = params;
        p[offset + i] += h;
        const double up = f(p);
        p[offset + i] -= 2 * h;
        const double down = f(p);
        grad[i] = (up - down) / (2 * h);
        for (std::size_t j = 0; j < n; ++j) {
            auto q = params;
            auto shift = [&](double di, double dj) {
                q = params;
                q[offset + i] += di;
                q[offset + j] += dj;
                return f(q);
            };
            hess[i][j] = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4 * h * h);
        }
    }
    const auto delta = testing_support::dense_solve(hess, grad);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = params[offset + i] - delta[i];
    return out;
}

} // namespace

TEST(UpdateClimber, TwoPeriodsCouplingLimits) {
    const auto data = make_dataset({{"r0", 22}, {"r1", 24}}, 1,
                                   {{0, 0, 10, Outcome::Success}, {0, 0, 10, Outcome::Success},
                                    {0, 1, 30, Outcome::Failure}, {0, 1, 30, Outcome::Failure}});
    for (double w_sq : {1e6, 1e-9}) {
        Hyperparameters hyper;
        hyper.w_sq = w_sq;
        const auto state = initialize_state(data, hyper);
        const auto updated = update_climber(state.climbers[0], state);
        ASSERT_EQ(updated.size(), 2u);
        if (w_sq < 1.0) {
            EXPECT_NEAR(updated[0], updated[1], 1e-6);
        } else {
            // Nearly independent: the first period rises, the second falls.
            EXPECT_GT(updated[0], 0.1);
            EXPECT_LT(updated[1], -0.1);
            const auto dense = dense_newton_step(data, hyper, state, 0);
            EXPECT_NEAR(updated[0], dense[0], 1e-5);
            EXPECT_NEAR(updated[1], dense[1], 1e-5);
        }
    }
}

TEST(UpdateClimber, MatchesDenseNewtonStepOnRandomInstances) {
    std::mt19937_64 gen(4242);
    std::uniform_real_distribution<double> jitter(-1.5, 1.5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto data = testing_support::random_small_instance(gen, 6);
        Hyperparameters hyper;
        hyper.w_sq = trial % 2 ? 1.0 / 52.0 : 0.5;
        auto state = initialize_state(data, hyper);
        for (auto& c : state.climbers) {
            for (auto& r : c.ratings) r = jitter(gen);
        }
        for (auto& r : state.routes) r.rating += jitter(gen);
        for (std::size_t c = 0; c < state.climbers.size(); ++c) {
            const auto updated = update_climber(state.climbers[c], state);
            const auto dense = dense_newton_step(data, hyper, state, c);
            ASSERT_EQ(updated.size(), dense.size());
            for (std::size_t k = 0; k < dense.size(); ++k) {
                EXPECT_NEAR(updated[k], dense[k], 1e-4 * std::max(1.0, std::abs(dense[k]))) << "trial " << trial;
            }
        }
    }
}

TEST(UpdateClimber, StaticClimbersShareOneRating) {
    Hyperparameters hyper;
    hyper.w_sq = 0.0;
    const auto data = make_dataset({{"r0", 22}}, 1, {{0, 0, 1, Outcome::Success}, {0, 0, 9, Outcome::Failure},
                                                    {0, 0, 20, Outcome::Success}});
    auto result = fit(data, hyper, tight());
    const auto& ratings = result.state.climbers[0].ratings;
    ASSERT_EQ(ratings.size(), 3u);
    EXPECT_EQ(ratings[0], ratings[1]);
    EXPECT_EQ(ratings[1], ratings[2]);
}

TEST(UpdateRoute, FarStartDoesNotCycle) {
    // Climbers far apart on either side of the route: the likelihood is flat
    // at the start, and unsafeguarded Newton steps bounce between the clamps.
    std::vector<AscentRecord> ascents;
    for (EntityIndex c = 0; c < 40; ++c) {
        for (int i = 0; i < 4; ++i) ascents.push_back({c, 0, 1, c % 2 ? Outcome::Success : Outcome::Failure});
    }
    auto data = make_dataset({{"r0", 10}}, 40, ascents);
    data.ascents.push_back({0, 0, 1, Outcome::Success});
    Hyperparameters hyper;
    hyper.sigma_r_sq = 1e6;
    auto state = initialize_state(data, hyper);
    for (std::size_t c = 0; c < 40; ++c) state.climbers[c].ratings[0] = c % 2 ? 8.0 : -8.0;
    const Layout layout(data);
    double previous = testing_support::log_posterior(data, hyper, layout, testing_support::flatten(state, layout));
    double last_move = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double before = state.routes[0].rating;
        state.routes[0].rating = update_route(state.routes[0], state);
        last_move = std::abs(state.routes[0].rating - before);
        const double now = testing_support::log_posterior(data, hyper, layout, testing_support::flatten(state, layout));
        EXPECT_GE(now, previous - 1e-9) << "iteration " << i;
        previous = now;
    }
    EXPECT_LT(last_move, 1e-9);
}

TEST(Fit, EveryHalfStepIncreasesLogPosterior) {
    WorldParameters params;
    params.n_climbers = 50;
    params.n_routes = 60;
    const Hyperparameters hyper;
    const auto world = generate_world(params, hyper, 21);
    const auto data = simulate_ascents(world, 20, 21);
    const Layout layout(data);
    auto state = initialize_state(data, hyper);
    auto lp = [&] { return testing_support::log_posterior(data, hyper, layout, testing_support::flatten(state, layout)); };
    double previous = lp();
    for (int i = 0; i < 30; ++i) {
        update_all_climbers(state);
        const double after_climbers = lp();
        EXPECT_GE(after_climbers, previous - 1e-8) << "iteration " << i;
        update_all_routes(state);
        previous = lp();
        EXPECT_GE(previous, after_climbers - 1e-8) << "iteration " << i;
    }
}

TEST(BtMarginalLogLikelihood, Examples) {
    std::vector<AscentRecord> ascents;
    for (int i = 0; i < 7; ++i) ascents.push_back({0, 0, 1, i % 2 ? Outcome::Success : Outcome::Failure});
    auto state = initialize_state(make_dataset({{"r", 22}}, 1, ascents), Hyperparameters{});
    EXPECT_NEAR(bt_marginal_log_likelihood(state), -7.0 * std::log(2.0), 1e-12);

    auto single = initialize_state(make_dataset({{"r", 22}}, 1, {{0, 0, 1, Outcome::Success}}), Hyperparameters{});
    single.climbers[0].ratings[0] = 1.0;
    EXPECT_NEAR(bt_marginal_log_likelihood(single), -0.313262, 1e-6);

    EXPECT_EQ(bt_marginal_log_likelihood(ModelState{}), 0.0);
}

TEST(ConvergenceWindow, SpanOfLastNinePoints) {
    std::vector<double> h{-100, -50, -10.5, -9.5, -9.4, -9.3, -9.2, -9.1, -9.05, -9.01, -9.0};
    EXPECT_FALSE(window_converged(h, 8, 1.0));
    h.push_back(-9.0);
    EXPECT_TRUE(window_converged(h, 8, 1.0));
    h.back() = -8.5; // span exactly 1.0 still counts
    EXPECT_TRUE(window_converged(h, 8, 1.0));
    EXPECT_FALSE(window_converged({-1.0, -1.0}, 8, 1.0));
}

TEST(Fit, OneByOneMatchesGridSearch) {
    const auto data = one_by_one_fixture();
    const Hyperparameters hyper;
    const auto result = fit(data, hyper, tight());
    ASSERT_TRUE(result.report.converged);

    const Layout layout(data);
    const auto best = testing_support::refining_grid_search(
        [&](const std::vector<double>& p) { return testing_support::log_posterior(data, hyper, layout, p); }, 2, 5.0,
        1e-4);
    EXPECT_NEAR(result.state.routes[0].rating, best[0], 1e-3);
    EXPECT_NEAR(result.state.climbers[0].ratings[0], best[1], 1e-3);
}

TEST(Fit, SymmetricFixtureGivesEqualRatings) {
    const auto result = fit(symmetric_fixture(), Hyperparameters{}, tight());
    EXPECT_NEAR(result.state.climbers[0].ratings[0], result.state.climbers[1].ratings[0], 1e-9);
    EXPECT_NEAR(result.state.routes[0].rating, result.state.routes[1].rating, 1e-9);
}

TEST(Fit, DefaultRuleNeedsAtLeastNineIterations) {
    const auto result = fit(one_by_one_fixture(), Hyperparameters{});
    EXPECT_TRUE(result.report.converged);
    EXPECT_EQ(result.report.iterations, 9);
    EXPECT_EQ(result.state.bt_log_likelihood_history.size(), 9u);
}

TEST(Fit, RejectsBadOptions) {
    FitOptions o;
    o.max_iterations = 7;
    EXPECT_THROW(fit(one_by_one_fixture(), Hyperparameters{}, o), ValidationError);
    o = {};
    o.threads = 0;
    EXPECT_THROW(fit(one_by_one_fixture(), Hyperparameters{}, o), ValidationError);
    EXPECT_THROW(fit(CleanDataset{}, Hyperparameters{}), EmptyDatasetError);
}

TEST(Fit, ReportsNonConvergence) {
    FitOptions o;
    o.max_iterations = 8;
    o.tolerance = 0.0;
    const auto result = fit(one_by_one_fixture(), Hyperparameters{}, o);
    EXPECT_FALSE(result.report.converged);
    EXPECT_EQ(result.report.iterations, 8);
}

TEST(Fit, RandomSmallInstancesReachAStationaryPoint) {
    std::mt19937_64 gen(777);
    for (int trial = 0; trial < 25; ++trial) {
        const auto data = testing_support::random_small_instance(gen, 9);
        const Hyperparameters hyper;
        const auto result = fit(data, hyper, tight());
        ASSERT_TRUE(result.report.converged) << "trial " << trial;
        const Layout layout(data);
        const auto grad =
            testing_support::numeric_gradient(data, hyper, layout, testing_support::flatten(result.state, layout));
        for (double g : grad) EXPECT_LE(std::abs(g), 1e-4) << "trial " << trial;
        EXPECT_GE(result.report.final_bt_log_likelihood, result.report.initial_bt_log_likelihood - 1e-12);
    }
}

TEST(Fit, DeterministicAndThreadCountIndependent) {
    const auto world = generate_world({.n_climbers = 40, .n_routes = 60, .n_periods = 4}, Hyperparameters{}, 5);
    const auto data = simulate_ascents(world, 8, 6);
    FitOptions one;
    FitOptions four;
    four.threads = 4;
    const auto a = fit(data, Hyperparameters{}, one);
    const auto b = fit(data, Hyperparameters{}, one);
    const auto c = fit(data, Hyperparameters{}, four);
    for (const auto* other : {&b, &c}) {
        EXPECT_EQ(a.report.iterations, other->report.iterations);
        EXPECT_EQ(a.state.bt_log_likelihood_history, other->state.bt_log_likelihood_history);
        for (std::size_t r = 0; r < a.state.routes.size(); ++r) {
            EXPECT_EQ(a.state.routes[r].rating, other->state.routes[r].rating);
        }
        for (std::size_t k = 0; k < a.state.climbers.size(); ++k) {
            EXPECT_EQ(a.state.climbers[k].ratings, other->state.climbers[k].ratings);
        }
    }
}

TEST(Fit, RoutePassIsOrderIndependent) {
    const auto world = generate_world({.n_climbers = 20, .n_routes = 30, .n_periods = 3}, Hyperparameters{}, 8);
    const auto data = simulate_ascents(world, 6, 9);
    auto state = initialize_state(data, Hyperparameters{});
    update_all_climbers(state);
    auto forward = state;
    auto reverse = state;
    update_all_routes(forward);
    for (std::size_t r = reverse.routes.size(); r-- > 0;) {
        reverse.routes[r].rating = update_route(reverse.routes[r], reverse);
    }
    for (std::size_t r = 0; r < state.routes.size(); ++r) {
        EXPECT_EQ(forward.routes[r].rating, reverse.routes[r].rating);
    }
}

TEST(Fit, ParallelForPropagatesWorkerExceptions) {
    EXPECT_THROW(detail::parallel_for(100, 4,
                                      [](std::size_t begin, std::size_t) {
                                          if (begin > 0) throw SolverError("boom");
                                      }),
                 SolverError);
}

TEST(Fit, IterationCostIsLinearInAscents) {
    const Hyperparameters hyper;
    const auto world = generate_world({.n_climbers = 300, .n_routes = 600, .n_periods = 10}, hyper, 12);
    const auto small = simulate_raw_ascents(world, 15, 1);
    const auto large = simulate_raw_ascents(world, 30, 1);
    auto time_iterations = [&](const CleanDataset& data) {
        double best = INFINITY;
        for (int rep = 0; rep < 3; ++rep) {
            auto state = initialize_state(data, hyper);
            const auto start = std::chrono::steady_clock::now();
            for (int i = 0; i < 5; ++i) {
                update_all_climbers(state);
                update_all_routes(state);
                (void)bt_marginal_log_likelihood(state);
            }
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
        return best;
    };
    const double t_small = time_iterations(small);
    const double t_large = time_iterations(large);
    EXPECT_LT(t_large / t_small, 3.0) << t_small << "s vs " << t_large << "s";

    const double bytes_small = static_cast<double>(initialize_state(small, hyper).memory_footprint());
    const double bytes_large = static_cast<double>(initialize_state(large, hyper).memory_footprint());
    EXPECT_LT(bytes_large / bytes_small, 2.2);
}

TEST(ClimberRatingAt, NearestPeriodWithEarlierTieBreak) {
    ClimberHistory h;
    h.weeks = {10, 20};
    h.ratings = {1.0, 2.0};
    EXPECT_EQ(climber_rating_at(h, 5).rating, 1.0);
    EXPECT_EQ(climber_rating_at(h, 10).rating, 1.0);
    EXPECT_EQ(climber_rating_at(h, 14).rating, 1.0);
    EXPECT_EQ(climber_rating_at(h, 15).rating, 1.0);
    EXPECT_EQ(climber_rating_at(h, 16).rating, 2.0);
    EXPECT_EQ(climber_rating_at(h, 99).rating, 2.0);
    EXPECT_FALSE(climber_rating_at(h, 99).fallback);
    const auto none = climber_rating_at(ClimberHistory{}, 3);
    EXPECT_TRUE(none.fallback);
    EXPECT_EQ(none.rating, 0.0);
}
