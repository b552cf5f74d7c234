#pragma once

// MAP estimation of all climber and route ratings.
//
// Each outer iteration first applies one Newton step to every climber's whole
// rating history (a tridiagonal system, because the Wiener prior only couples
// adjacent periods), then one scalar Newton step to every route. Climber steps
// read only route ratings and route steps read only climber ratings, so the
// entities of one pass are independent and may be processed in parallel.
// The loop stops once the Bradley-Terry log-likelihood has stayed within a
// fixed band over the last few iterations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "climbing/dataset.hpp"
#include "climbing/error.hpp"
#include "climbing/model.hpp"
#include "climbing/tridiagonal.hpp"

namespace climbing {

// Largest change applied to any rating by one Newton step.
inline constexpr double kMaxNewtonStep = 10.0;

struct ClimberAscentRef {
    EntityIndex route = 0;
    Outcome outcome = Outcome::Success;
};

struct RouteAscentRef {
    EntityIndex climber = 0;
    std::uint32_t period = 0;
    Outcome outcome = Outcome::Success;
};

// One climber's ratings, one per week in which they logged ascents.
struct ClimberHistory {
    std::string id;
    std::vector<Week> weeks;                                  // strictly increasing
    std::vector<Rating> ratings;                              // parallel to weeks
    std::vector<std::vector<ClimberAscentRef>> period_ascents; // parallel to weeks
};

struct RouteNode {
    std::string id;
    int grade = 0;
    Rating prior_mean = 0.0;
    Rating rating = 0.0;
    std::vector<RouteAscentRef> ascents;
};

struct ModelState {
    std::vector<ClimberHistory> climbers;
    std::vector<RouteNode> routes;
    Hyperparameters hyper;
    std::vector<double> bt_log_likelihood_history;

    // Bytes held by the state's containers; used to check memory stays linear.
    std::size_t memory_footprint() const {
        std::size_t bytes = sizeof(*this) + climbers.capacity() * sizeof(ClimberHistory) +
                            routes.capacity() * sizeof(RouteNode) +
                            bt_log_likelihood_history.capacity() * sizeof(double);
        for (const auto& c : climbers) {
            bytes += c.id.capacity() + c.weeks.capacity() * sizeof(Week) + c.ratings.capacity() * sizeof(Rating) +
                     c.period_ascents.capacity() * sizeof(std::vector<ClimberAscentRef>);
            for (const auto& p : c.period_ascents) bytes += p.capacity() * sizeof(ClimberAscentRef);
        }
        for (const auto& r : routes) {
            bytes += r.id.capacity() + r.ascents.capacity() * sizeof(RouteAscentRef);
        }
        return bytes;
    }
};

struct FitOptions {
    int max_iterations = 1000;
    // Converged when the last (window + 1) log-likelihood values lie within `tolerance`.
    int convergence_window = 8;
    double tolerance = 1.0;
    int threads = 1;

    void validate() const {
        if (convergence_window < 1) throw ValidationError("convergence_window must be >= 1");
        if (max_iterations < convergence_window) {
            throw ValidationError("max_iterations must be >= convergence_window (" +
                                  std::to_string(convergence_window) + ")");
        }
        if (!(tolerance >= 0.0)) throw ValidationError("tolerance must be >= 0");
        if (threads < 1) throw ValidationError("threads must be >= 1");
    }
};

struct FitReport {
    int iterations = 0;
    bool converged = false;
    double initial_bt_log_likelihood = 0.0;
    double final_bt_log_likelihood = 0.0;
};

struct FitResult {
    ModelState state;
    FitReport report;
};

namespace detail {

// Runs fn(begin, end) over [0, n) split into contiguous chunks. The first
// exception thrown by any chunk is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    if (workers <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(n, w * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            pool.emplace_back([&fn, &errors, w, begin, end] {
                try {
                    fn(begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline double clamp_step(double step) { return std::clamp(step, -kMaxNewtonStep, kMaxNewtonStep); }

inline constexpr int kMaxStepHalvings = 40;

// Route's share of the log-posterior: its prior plus the likelihood of its ascents.
inline double route_objective(const RouteNode& route, Rating rating, const ModelState& state) {
    double value = normal_log_density(rating, route.prior_mean, state.hyper.sigma_r_sq);
    for (const auto& ref : route.ascents) {
        value += bt_log_probability(state.climbers[ref.climber].ratings[ref.period], rating, ref.outcome);
    }
    return value;
}

// Climber's share of the log-posterior: first-period prior, Wiener increments
// and the likelihood of its ascents.
inline double climber_objective(const ClimberHistory& climber, const std::vector<Rating>& ratings,
                                const ModelState& state) {
    const auto& hyper = state.hyper;
    double value = normal_log_density(ratings[0], 0.0, hyper.sigma_c_sq);
    for (std::size_t k = 0; k < ratings.size(); ++k) {
        if (k > 0 && hyper.w_sq > 0.0) {
            value += normal_log_density(ratings[k], ratings[k - 1],
                                        wiener_variance(climber.weeks[k - 1], climber.weeks[k], hyper));
        }
        for (const auto& ref : climber.period_ascents[k]) {
            value += bt_log_probability(ratings[k], state.routes[ref.route].rating, ref.outcome);
        }
    }
    return value;
}

// Shrinks a (clamped) Newton step by halving until the objective does not
// decrease. Far from the optimum the logistic likelihood is nearly flat and a
// full step can overshoot into a 2-cycle; at the optimum the step is zero, so
// fixed points are unchanged. If no halving helps, the full step is kept.
template <typename Objective>
std::vector<double> safeguarded_step(const std::vector<double>& current, const std::vector<double>& step,
                                     Objective&& objective) {
    const double base = objective(current);
    const double slack = 1e-12 * (1.0 + std::abs(base)); // rounding noise near the optimum
    std::vector<double> trial(current.size());
    double scale = 1.0;
    for (int i = 0; i <= kMaxStepHalvings; ++i, scale *= 0.5) {
        for (std::size_t k = 0; k < current.size(); ++k) trial[k] = current[k] + scale * step[k];
        if (objective(trial) >= base - slack) return trial;
    }
    for (std::size_t k = 0; k < current.size(); ++k) trial[k] = current[k] + step[k];
    return trial;
}

} // namespace detail

inline ModelState initialize_state(const CleanDataset& data, const Hyperparameters& hyper) {
    hyper.validate();
    if (data.empty()) throw EmptyDatasetError("cannot fit an empty dataset");

    ModelState state;
    state.hyper = hyper;
    state.routes.resize(data.routes.size());
    for (std::size_t r = 0; r < data.routes.size(); ++r) {
        auto& node = state.routes[r];
        node.id = data.routes[r].id;
        node.grade = data.routes[r].grade;
        node.prior_mean = route_prior_mean(node.grade, hyper);
        node.rating = node.prior_mean;
    }

    state.climbers.resize(data.climbers.size());
    for (std::size_t c = 0; c < data.climbers.size(); ++c) state.climbers[c].id = data.climbers[c];
    for (const auto& a : data.ascents) {
        if (a.climber >= state.climbers.size() || a.route >= state.routes.size()) {
            throw ValidationError("ascent references an entity outside the dataset");
        }
        state.climbers[a.climber].weeks.push_back(a.week);
    }
    for (auto& c : state.climbers) {
        std::sort(c.weeks.begin(), c.weeks.end());
        c.weeks.erase(std::unique(c.weeks.begin(), c.weeks.end()), c.weeks.end());
        c.weeks.shrink_to_fit();
        c.ratings.assign(c.weeks.size(), 0.0);
        c.period_ascents.resize(c.weeks.size());
    }
    for (const auto& a : data.ascents) {
        auto& c = state.climbers[a.climber];
        const auto period =
            static_cast<std::uint32_t>(std::lower_bound(c.weeks.begin(), c.weeks.end(), a.week) - c.weeks.begin());
        c.period_ascents[period].push_back(ClimberAscentRef{a.route, a.outcome});
        state.routes[a.route].ascents.push_back(RouteAscentRef{a.climber, period, a.outcome});
    }
    return state;
}

// Newton step for one route against the current climber ratings.
inline Rating update_route(const RouteNode& route, const ModelState& state) {
    if (route.ascents.empty()) return route.rating;
    DerivativePair d = normal_prior_derivatives(route.rating, route.prior_mean, state.hyper.sigma_r_sq);
    for (const auto& ref : route.ascents) {
        const Rating climber = state.climbers[ref.climber].ratings[ref.period];
        accumulate_bt(d, route.rating, climber, ref.outcome == Outcome::Failure);
    }
    if (!(d.d2 < 0.0)) throw SolverError("route '" + route.id + "': non-negative second derivative");
    const double step = -detail::clamp_step(d.d1 / d.d2);
    return detail::safeguarded_step({route.rating}, {step}, [&](const std::vector<double>& r) {
        return detail::route_objective(route, r[0], state);
    })[0];
}

// Newton step for a climber's whole history against the current route ratings.
inline std::vector<Rating> update_climber(const ClimberHistory& climber, const ModelState& state) {
    const std::size_t n = climber.weeks.size();
    if (n == 0) return {};
    const auto& hyper = state.hyper;

    std::vector<DerivativePair> bt(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (const auto& ref : climber.period_ascents[k]) {
            accumulate_bt(bt[k], climber.ratings[k], state.routes[ref.route].rating, ref.outcome == Outcome::Success);
        }
    }

    if (n > 1 && hyper.w_sq == 0.0) {
        // No drift: every period shares one rating.
        DerivativePair d = normal_prior_derivatives(climber.ratings[0], 0.0, hyper.sigma_c_sq);
        for (const auto& p : bt) d += p;
        const double step = -detail::clamp_step(d.d1 / d.d2);
        const auto shared = detail::safeguarded_step({climber.ratings[0]}, {step}, [&](const std::vector<double>& r) {
            return detail::climber_objective(climber, std::vector<Rating>(n, r[0]), state);
        });
        return std::vector<Rating>(n, shared[0]);
    }

    std::vector<double> gradient(n);
    std::vector<double> diag(n);
    std::vector<double> off(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        gradient[k] = bt[k].d1;
        diag[k] = bt[k].d2;
    }
    const DerivativePair prior = normal_prior_derivatives(climber.ratings[0], 0.0, hyper.sigma_c_sq);
    gradient[0] += prior.d1;
    diag[0] += prior.d2;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double var = wiener_variance(climber.weeks[k], climber.weeks[k + 1], hyper);
        const DerivativePair fwd = wiener_derivatives(climber.ratings[k], climber.ratings[k + 1], var);
        const DerivativePair bwd = wiener_derivatives(climber.ratings[k + 1], climber.ratings[k], var);
        gradient[k] += fwd.d1;
        diag[k] += fwd.d2;
        gradient[k + 1] += bwd.d1;
        diag[k + 1] += bwd.d2;
        off[k] = 1.0 / var;
    }

    const auto delta = solve_tridiagonal(off, diag, off, gradient);
    std::vector<double> step(n);
    for (std::size_t k = 0; k < n; ++k) step[k] = -detail::clamp_step(delta[k]);
    return detail::safeguarded_step(climber.ratings, step, [&](const std::vector<double>& r) {
        return detail::climber_objective(climber, r, state);
    });
}

inline void update_all_climbers(ModelState& state, int threads = 1) {
    detail::parallel_for(state.climbers.size(), threads, [&state](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            state.climbers[c].ratings = update_climber(state.climbers[c], state);
        }
    });
}

inline void update_all_routes(ModelState& state, int threads = 1) {
    detail::parallel_for(state.routes.size(), threads, [&state](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            state.routes[r].rating = update_route(state.routes[r], state);
        }
    });
}

// Sum of log P(observed outcome) over all ascents; priors excluded.
// Per-route partial sums are added in route order so the result does not
// depend on the thread count.
inline double bt_marginal_log_likelihood(const ModelState& state, int threads = 1) {
    std::vector<double> partial(state.routes.size(), 0.0);
    detail::parallel_for(state.routes.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const auto& route = state.routes[r];
            double sum = 0.0;
            for (const auto& ref : route.ascents) {
                sum += bt_log_probability(state.climbers[ref.climber].ratings[ref.period], route.rating, ref.outcome);
            }
            partial[r] = sum;
        }
    });
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

inline bool window_converged(const std::vector<double>& history, int window, double tolerance) {
    const auto needed = static_cast<std::size_t>(window) + 1;
    if (history.size() < needed) return false;
    const auto [lo, hi] = std::minmax_element(history.end() - static_cast<std::ptrdiff_t>(needed), history.end());
    return *hi - *lo <= tolerance;
}

inline FitResult fit(ModelState state, const FitOptions& options = {}) {
    options.validate();
    FitResult result;
    result.report.initial_bt_log_likelihood = bt_marginal_log_likelihood(state, options.threads);
    state.bt_log_likelihood_history.clear();
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        update_all_climbers(state, options.threads);
        update_all_routes(state, options.threads);
        const double ll = bt_marginal_log_likelihood(state, options.threads);
        if (!std::isfinite(ll)) throw SolverError("log-likelihood became non-finite at iteration " + std::to_string(iter));
        state.bt_log_likelihood_history.push_back(ll);
        result.report.iterations = iter;
        if (window_converged(state.bt_log_likelihood_history, options.convergence_window, options.tolerance)) {
            result.report.converged = true;
            break;
        }
    }
    result.report.final_bt_log_likelihood = state.bt_log_likelihood_history.back();
    result.state = std::move(state);
    return result;
}

inline FitResult fit(const CleanDataset& data, const Hyperparameters& hyper, const FitOptions& options = {}) {
    options.validate();
    return fit(initialize_state(data, hyper), options);
}

struct RatingLookup {
    Rating rating = 0.0;
    bool fallback = false; // no rating available; prior mean used
};

// Rating at the period nearest to `week`; ties go to the earlier period.
// A climber with no periods falls back to the prior mean 0.
inline RatingLookup climber_rating_at(const ClimberHistory& climber, Week week) {
    if (climber.weeks.empty()) return {0.0, true};
    const auto it = std::lower_bound(climber.weeks.begin(), climber.weeks.end(), week);
    std::size_t idx;
    if (it == climber.weeks.end()) {
        idx = climber.weeks.size() - 1;
    } else if (it == climber.weeks.begin() || *it == week) {
        idx = static_cast<std::size_t>(it - climber.weeks.begin());
    } else {
        const std::size_t after = static_cast<std::size_t>(it - climber.weeks.begin());
        idx = (*it - week) < (week - climber.weeks[after - 1]) ? after : after - 1;
    }
    return {climber.ratings[idx], false};
}

// P(success) for a climber at a given week on a route, from fitted state.
inline double predict_success(const ModelState& state, EntityIndex climber, EntityIndex route, Week week) {
    const Rating c = climber < state.climbers.size() ? climber_rating_at(state.climbers[climber], week).rating : 0.0;
    const Rating r = state.routes.at(route).rating;
    return bt_probability(c, r);
}

} // namespace climbing
