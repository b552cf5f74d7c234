#pragma once

// Dynamic Bradley-Terry model for climbing ascents.
//
// Climbers and routes both carry a rating on the natural-log-odds scale.
// A climber with rating r_c succeeds on a route with rating r_r with
// probability exp(r_c) / (exp(r_c) + exp(r_r)). Routes have a normal prior
// centred on b * (grade - g0), a climber's first rating has a N(0, sigma_c^2)
// prior, and later ratings follow a Wiener process with w^2 variance per week.
//
// Everything here is a pure function; the optimizer lives in solver.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>

#include "climbing/error.hpp"

namespace climbing {

using Rating = double;

enum class Outcome : std::uint8_t { Failure = 0, Success = 1 };

// Which entity's rating the derivatives are taken with respect to.
enum class Side : std::uint8_t { Climber, Route };

struct Hyperparameters {
    double sigma_c_sq = 1.0;       // initial climber rating variance
    double sigma_r_sq = 4.0;       // route rating variance
    double w_sq = 1.0 / 52.0;      // climber rating variance per week
    int g0 = 22;                   // reference Ewbank grade
    double b = 0.4;                // rating units per Ewbank grade

    void validate() const {
        if (!(sigma_c_sq > 0.0) || !std::isfinite(sigma_c_sq)) {
            throw ValidationError("sigma_c_sq must be finite and > 0");
        }
        if (!(sigma_r_sq > 0.0) || !std::isfinite(sigma_r_sq)) {
            throw ValidationError("sigma_r_sq must be finite and > 0");
        }
        if (!(w_sq >= 0.0) || !std::isfinite(w_sq)) {
            throw ValidationError("w_sq must be finite and >= 0");
        }
        if (!(b >= 0.0) || !std::isfinite(b)) {
            throw ValidationError("b must be finite and >= 0");
        }
    }

    friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

// First and second derivative of a log-density term with respect to one rating.
struct DerivativePair {
    double d1 = 0.0;
    double d2 = 0.0;

    DerivativePair& operator+=(const DerivativePair& other) {
        d1 += other.d1;
        d2 += other.d2;
        return *this;
    }
    friend DerivativePair operator+(DerivativePair lhs, const DerivativePair& rhs) { return lhs += rhs; }
};

// Rating differences are clamped to this magnitude so probabilities stay
// strictly inside (0, 1) in double precision.
inline constexpr double kMaxRatingDifference = 36.0;

// Logistic of the clamped difference; never returns exactly 0 or 1.
inline double logistic_of_difference(double diff) {
    const double x = std::clamp(diff, -kMaxRatingDifference, kMaxRatingDifference);
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// P(success) of a climber on a route.
inline double bt_probability(Rating climber_rating, Rating route_rating) {
    return logistic_of_difference(climber_rating - route_rating);
}

// log P(observed outcome). Computed via log1p so it stays accurate in the tails.
inline double bt_log_probability(Rating climber_rating, Rating route_rating, Outcome outcome) {
    double x = std::clamp(climber_rating - route_rating, -kMaxRatingDifference, kMaxRatingDifference);
    if (outcome == Outcome::Failure) x = -x;
    // log(sigmoid(x)) = -log(1 + exp(-x))
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline Rating route_prior_mean(int grade, const Hyperparameters& hyper) {
    return hyper.b * static_cast<double>(grade - hyper.g0);
}

inline double wiener_variance(std::int64_t week_a, std::int64_t week_b, const Hyperparameters& hyper) {
    return static_cast<double>(std::llabs(week_b - week_a)) * hyper.w_sq;
}

// Adds one Bradley-Terry observation to `acc`. `won` is from the point of view
// of the entity whose rating is `own`; for a route a "win" is a failed ascent.
inline void accumulate_bt(DerivativePair& acc, Rating own, Rating opponent, bool won) {
    const double p = logistic_of_difference(own - opponent);
    acc.d1 += (won ? 1.0 : 0.0) - p;
    acc.d2 -= p * (1.0 - p);
}

inline DerivativePair bt_derivatives(Rating own_rating,
                                     std::span<const Rating> opponent_ratings,
                                     std::span<const Outcome> outcomes,
                                     Side side) {
    if (opponent_ratings.size() != outcomes.size()) {
        throw ValidationError("bt_derivatives: opponent_ratings and outcomes differ in length");
    }
    const Outcome winning = side == Side::Climber ? Outcome::Success : Outcome::Failure;
    DerivativePair acc;
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        accumulate_bt(acc, own_rating, opponent_ratings[k], outcomes[k] == winning);
    }
    return acc;
}

inline DerivativePair normal_prior_derivatives(Rating r, Rating mean, double variance) {
    if (!(variance > 0.0)) {
        throw ValidationError("normal_prior_derivatives: variance must be > 0");
    }
    return {-(r - mean) / variance, -1.0 / variance};
}

// Log-density (up to a constant) of the normal prior, used by oracles and diagnostics.
inline double normal_log_density(Rating r, Rating mean, double variance) {
    const double z = r - mean;
    return -0.5 * z * z / variance;
}

// Derivatives of the Wiener increment term -(r_self - r_other)^2 / (2 var)
// with respect to r_self. The mixed second derivative is +1/var.
inline DerivativePair wiener_derivatives(Rating r_self, Rating r_other, double variance) {
    if (!(variance > 0.0)) {
        throw ValidationError("wiener_derivatives: variance must be > 0");
    }
    return {-(r_self - r_other) / variance, -1.0 / variance};
}

} // namespace climbing
