#pragma once

// Ground-truth worlds sampled from the model's own priors, and ascent logs
// simulated from them. Used as the oracle for end-to-end recovery checks.

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "climbing/dataset.hpp"
#include "climbing/error.hpp"
#include "climbing/model.hpp"
#include "climbing/random.hpp"
#include "climbing/solver.hpp"

namespace climbing {

struct WorldParameters {
    int n_climbers = 100;
    int n_routes = 200;
    int n_periods = 10;
    int grade_min = 15;
    int grade_max = 29;
    Week first_week = 2600;
    Week weeks_between_periods = 4;

    void validate() const {
        if (n_climbers < 1) throw ValidationError("n_climbers must be >= 1");
        if (n_routes < 1) throw ValidationError("n_routes must be >= 1");
        if (n_periods < 1) throw ValidationError("n_periods must be >= 1");
        if (grade_min < 1 || grade_max < grade_min) throw ValidationError("grade range is empty or non-positive");
        if (weeks_between_periods < 1) throw ValidationError("weeks_between_periods must be >= 1");
    }
};

struct SyntheticWorld {
    std::vector<std::string> route_ids;
    std::vector<int> route_grades;
    std::vector<Rating> route_ratings;
    std::vector<std::string> climber_ids;
    std::vector<std::vector<Week>> climber_weeks;
    std::vector<std::vector<Rating>> climber_ratings;
    // Wiener increments r(t_k+1) - r(t_k) and their variances, pooled over climbers.
    std::vector<double> increments;
    std::vector<double> increment_variances;
    std::uint64_t seed = 0;
    Hyperparameters hyper;
};

inline std::string synthetic_climber_id(std::size_t idx) { return "c" + std::to_string(idx); }
inline std::string synthetic_route_id(std::size_t idx) { return "r" + std::to_string(idx); }

inline SyntheticWorld generate_world(const WorldParameters& params, const Hyperparameters& hyper, std::uint64_t seed) {
    params.validate();
    hyper.validate();
    SyntheticWorld world;
    world.seed = seed;
    world.hyper = hyper;

    Rng route_rng(derive_seed(seed, 1));
    for (int r = 0; r < params.n_routes; ++r) {
        const int grade = static_cast<int>(route_rng.uniform_int(params.grade_min, params.grade_max));
        world.route_ids.push_back(synthetic_route_id(static_cast<std::size_t>(r)));
        world.route_grades.push_back(grade);
        world.route_ratings.push_back(route_rng.normal(route_prior_mean(grade, hyper), hyper.sigma_r_sq));
    }

    Rng climber_rng(derive_seed(seed, 2));
    for (int c = 0; c < params.n_climbers; ++c) {
        world.climber_ids.push_back(synthetic_climber_id(static_cast<std::size_t>(c)));
        std::vector<Week> weeks;
        std::vector<Rating> ratings;
        Rating current = climber_rng.normal(0.0, hyper.sigma_c_sq);
        for (int p = 0; p < params.n_periods; ++p) {
            const Week week = params.first_week + p * params.weeks_between_periods;
            if (p > 0) {
                const double var = wiener_variance(weeks.back(), week, hyper);
                const double step = var > 0.0 ? climber_rng.normal(0.0, var) : 0.0;
                world.increments.push_back(step);
                world.increment_variances.push_back(var);
                current += step;
            }
            weeks.push_back(week);
            ratings.push_back(current);
        }
        world.climber_weeks.push_back(std::move(weeks));
        world.climber_ratings.push_back(std::move(ratings));
    }
    return world;
}

// Every climber-period attempts `ascents_per_climber_period` routes drawn
// uniformly with replacement. Entity indexes equal world indexes and no
// filtering is applied, so dataset invariants may not hold.
inline CleanDataset simulate_raw_ascents(const SyntheticWorld& world, int ascents_per_climber_period,
                                         std::uint64_t seed) {
    if (ascents_per_climber_period < 1) throw ValidationError("ascents_per_climber_period must be >= 1");
    if (world.route_ids.empty() || world.climber_ids.empty()) throw ValidationError("world has no routes or climbers");
    CleanDataset data;
    for (std::size_t r = 0; r < world.route_ids.size(); ++r) {
        data.routes.push_back(RouteInfo{world.route_ids[r], world.route_grades[r]});
    }
    data.climbers = world.climber_ids;
    Rng rng(derive_seed(seed, 3));
    for (std::size_t c = 0; c < world.climber_ids.size(); ++c) {
        for (std::size_t p = 0; p < world.climber_weeks[c].size(); ++p) {
            for (int a = 0; a < ascents_per_climber_period; ++a) {
                const auto route = static_cast<EntityIndex>(rng.uniform_index(world.route_ids.size()));
                const double prob = bt_probability(world.climber_ratings[c][p], world.route_ratings[route]);
                const Outcome outcome = rng.bernoulli(prob) ? Outcome::Success : Outcome::Failure;
                data.ascents.push_back(AscentRecord{static_cast<EntityIndex>(c), route, world.climber_weeks[c][p], outcome});
            }
        }
    }
    data.provenance.rows_read = data.ascents.size();
    data.provenance.rows_kept = data.ascents.size();
    return data;
}

// Simulated ascents passed through the route/climber removal rules.
inline CleanDataset simulate_ascents(const SyntheticWorld& world, int ascents_per_climber_period, std::uint64_t seed) {
    auto raw = simulate_raw_ascents(world, ascents_per_climber_period, seed);
    Provenance prov;
    prov.rows_read = raw.ascents.size();
    auto out = detail::filter_and_compact(std::move(raw.ascents), raw.routes, raw.climbers, prov);
    if (out.empty()) throw EmptyDatasetError("no simulated ascents survived filtering");
    return out;
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("pearson_correlation: need >= 2 paired values");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

struct RecoveryReport {
    double route_correlation = 0.0;
    double climber_correlation = 0.0;
    double route_rmse = 0.0;
    std::size_t routes_compared = 0;
    std::size_t climber_ratings_compared = 0;
};

// Compares fitted ratings with the truth, matching entities by id and
// climber periods by week.
inline RecoveryReport recovery_report(const SyntheticWorld& world, const ModelState& fitted) {
    std::unordered_map<std::string, std::size_t> route_index;
    for (std::size_t r = 0; r < world.route_ids.size(); ++r) route_index.emplace(world.route_ids[r], r);
    std::unordered_map<std::string, std::size_t> climber_index;
    for (std::size_t c = 0; c < world.climber_ids.size(); ++c) climber_index.emplace(world.climber_ids[c], c);

    std::vector<double> true_routes, fitted_routes;
    for (const auto& node : fitted.routes) {
        const auto it = route_index.find(node.id);
        if (it == route_index.end()) continue;
        true_routes.push_back(world.route_ratings[it->second]);
        fitted_routes.push_back(node.rating);
    }
    std::vector<double> true_climbers, fitted_climbers;
    for (const auto& climber : fitted.climbers) {
        const auto it = climber_index.find(climber.id);
        if (it == climber_index.end()) continue;
        const auto& weeks = world.climber_weeks[it->second];
        for (std::size_t k = 0; k < climber.weeks.size(); ++k) {
            const auto w = std::lower_bound(weeks.begin(), weeks.end(), climber.weeks[k]);
            if (w == weeks.end() || *w != climber.weeks[k]) continue;
            true_climbers.push_back(world.climber_ratings[it->second][static_cast<std::size_t>(w - weeks.begin())]);
            fitted_climbers.push_back(climber.ratings[k]);
        }
    }
    if (true_routes.size() < 2 || true_climbers.size() < 2) {
        throw ValidationError("recovery_report: fewer than 2 comparable entities");
    }

    RecoveryReport rep;
    rep.routes_compared = true_routes.size();
    rep.climber_ratings_compared = true_climbers.size();
    rep.route_correlation = pearson_correlation(true_routes, fitted_routes);
    rep.climber_correlation = pearson_correlation(true_climbers, fitted_climbers);
    double sq = 0.0;
    for (std::size_t i = 0; i < true_routes.size(); ++i) {
        const double d = fitted_routes[i] - true_routes[i];
        sq += d * d;
    }
    rep.route_rmse = std::sqrt(sq / static_cast<double>(true_routes.size()));
    return rep;
}

} // namespace climbing
