#pragma once

// Predictive evaluation: the P > 0.5 classifier, contingency-table metrics,
// the constant-rate baseline, stratified repeated k-fold cross-validation and
// precision-recall curve data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "climbing/dataset.hpp"
#include "climbing/error.hpp"
#include "climbing/model.hpp"
#include "climbing/random.hpp"
#include "climbing/solver.hpp"

namespace climbing {

inline constexpr double kClassifierThreshold = 0.5;

inline Outcome classify(double p) { return p > kClassifierThreshold ? Outcome::Success : Outcome::Failure; }

namespace detail {
inline double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
} // namespace detail

// Rows are predictions, columns actual outcomes; "positive" is a successful ascent.
struct ContingencyTable {
    std::uint64_t tp = 0; // predicted success, actual success
    std::uint64_t fp = 0; // predicted success, actual failure
    std::uint64_t fn = 0; // predicted failure, actual success
    std::uint64_t tn = 0; // predicted failure, actual failure

    std::uint64_t total() const { return tp + fp + fn + tn; }
    double accuracy() const { return detail::ratio(static_cast<double>(tp + tn), static_cast<double>(total())); }
    double precision() const { return detail::ratio(static_cast<double>(tp), static_cast<double>(tp + fp)); }
    double recall() const { return detail::ratio(static_cast<double>(tp), static_cast<double>(tp + fn)); }
    double specificity() const { return detail::ratio(static_cast<double>(tn), static_cast<double>(tn + fp)); }
    double balanced_accuracy() const { return (recall() + specificity()) / 2.0; }
    double success_rate() const { return detail::ratio(static_cast<double>(tp + fn), static_cast<double>(total())); }

    friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

// Log loss of always predicting the success rate `rate`:
// (rate - 1) log(1 - rate) - rate log(rate), with 0 log 0 = 0.
inline double baseline_log_loss(double rate) {
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return -xlogx(1.0 - rate) - xlogx(rate);
}

struct EvaluationReport {
    std::size_t count = 0;
    double log_loss = 0.0;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    ContingencyTable contingency;
    double success_rate = 0.0;
    double baseline_log_loss = 0.0;
    double baseline_accuracy = 0.0;
    double baseline_balanced_accuracy = 0.5;
    double baseline_precision = 0.0;
};

// Fills the count-derived fields of a report from a contingency table.
inline EvaluationReport report_from_counts(const ContingencyTable& table) {
    EvaluationReport rep;
    rep.contingency = table;
    rep.count = static_cast<std::size_t>(table.total());
    rep.accuracy = table.accuracy();
    rep.balanced_accuracy = table.balanced_accuracy();
    rep.precision = table.precision();
    rep.recall = table.recall();
    rep.success_rate = table.success_rate();
    rep.baseline_log_loss = baseline_log_loss(rep.success_rate);
    // The baseline predicts P = success_rate for everything, which the
    // classifier turns into a constant prediction.
    rep.baseline_accuracy = classify(rep.success_rate) == Outcome::Success ? rep.success_rate : 1.0 - rep.success_rate;
    rep.baseline_precision = rep.success_rate;
    return rep;
}

// Probabilities are clamped to [1e-15, 1 - 1e-15] before taking logs.
inline EvaluationReport compute_metrics(std::span<const double> predictions, std::span<const Outcome> actuals) {
    if (predictions.size() != actuals.size()) throw ValidationError("compute_metrics: length mismatch");
    if (predictions.empty()) throw ValidationError("compute_metrics: no predictions");
    ContingencyTable table;
    double loss = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double p = std::clamp(predictions[i], 1e-15, 1.0 - 1e-15);
        const bool actual = actuals[i] == Outcome::Success;
        const bool predicted = classify(predictions[i]) == Outcome::Success;
        if (predicted) (actual ? table.tp : table.fp) += 1;
        else (actual ? table.fn : table.tn) += 1;
        loss -= actual ? std::log(p) : std::log1p(-p);
    }
    EvaluationReport rep = report_from_counts(table);
    rep.log_loss = loss / static_cast<double>(predictions.size());
    return rep;
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    bool classifier = false; // the P > 0.5 operating point
};

// One point per distinct predicted probability t (predict success when p >= t),
// thresholds descending, plus the classifier's own P > 0.5 point marked.
inline std::vector<PrPoint> precision_recall_curve(std::span<const double> predictions,
                                                   std::span<const Outcome> actuals) {
    if (predictions.size() != actuals.size()) throw ValidationError("precision_recall_curve: length mismatch");
    if (predictions.empty()) throw ValidationError("precision_recall_curve: no predictions");
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return predictions[a] > predictions[b]; });
    const auto positives = static_cast<double>(
        std::count(actuals.begin(), actuals.end(), Outcome::Success));

    std::vector<PrPoint> curve;
    double tp = 0.0;
    double fp = 0.0;
    bool classifier_emitted = false;
    auto emit_classifier = [&] {
        curve.push_back({kClassifierThreshold, detail::ratio(tp, tp + fp), detail::ratio(tp, positives), true});
        classifier_emitted = true;
    };
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = predictions[order[i]];
        if (!classifier_emitted && t <= kClassifierThreshold) emit_classifier();
        while (i < order.size() && predictions[order[i]] == t) {
            (actuals[order[i]] == Outcome::Success ? tp : fp) += 1.0;
            ++i;
        }
        curve.push_back({t, detail::ratio(tp, tp + fp), detail::ratio(tp, positives), false});
    }
    if (!classifier_emitted) emit_classifier();
    return curve;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

// Ordinary least squares of y on x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("linear_fit: need >= 2 paired values");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LinearFit f;
    f.slope = detail::ratio(sxy, sxx);
    f.intercept = my - f.slope * mx;
    f.r_squared = (sxx == 0.0 || syy == 0.0) ? 0.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

// fold_of[repeat][ascent] is the fold in which that ascent is held out.
struct FoldPlan {
    int k = 10;
    int repeats = 1;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::uint32_t>> fold_of;
};

// Shuffles each outcome stratum independently per repeat and deals it
// round-robin into k folds. The failure stratum continues dealing where the
// success stratum stopped so overall fold sizes also differ by at most one.
inline FoldPlan make_fold_plan(const CleanDataset& data, int k, int repeats, std::uint64_t seed) {
    if (k < 2) throw ValidationError("fold plan: k must be >= 2");
    if (repeats < 1) throw ValidationError("fold plan: repeats must be >= 1");
    std::vector<std::uint32_t> successes;
    std::vector<std::uint32_t> failures;
    for (std::size_t i = 0; i < data.ascents.size(); ++i) {
        (data.ascents[i].outcome == Outcome::Success ? successes : failures).push_back(static_cast<std::uint32_t>(i));
    }
    const auto ku = static_cast<std::size_t>(k);
    if (successes.size() < ku || failures.size() < ku) {
        throw ValidationError("fold plan: k=" + std::to_string(k) + " exceeds stratum size (successes " +
                              std::to_string(successes.size()) + ", failures " + std::to_string(failures.size()) +
                              ")");
    }

    FoldPlan plan{k, repeats, seed, {}};
    plan.fold_of.assign(static_cast<std::size_t>(repeats), std::vector<std::uint32_t>(data.ascents.size(), 0));
    for (int rep = 0; rep < repeats; ++rep) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
        auto& folds = plan.fold_of[static_cast<std::size_t>(rep)];
        std::size_t next = 0;
        for (auto* stratum : {&successes, &failures}) {
            std::vector<std::uint32_t> shuffled = *stratum;
            rng.shuffle(std::span<std::uint32_t>(shuffled));
            for (auto idx : shuffled) {
                folds[idx] = static_cast<std::uint32_t>(next % ku);
                ++next;
            }
        }
    }
    return plan;
}

// Predictions for every ascent of `data` from a fitted state whose entity
// indexes match the dataset.
inline std::vector<double> predict_ascents(const ModelState& state, const CleanDataset& data) {
    std::vector<double> out;
    out.reserve(data.ascents.size());
    for (const auto& a : data.ascents) out.push_back(predict_success(state, a.climber, a.route, a.week));
    return out;
}

inline std::vector<Outcome> outcomes_of(const CleanDataset& data) {
    std::vector<Outcome> out;
    out.reserve(data.ascents.size());
    for (const auto& a : data.ascents) out.push_back(a.outcome);
    return out;
}

struct CrossValidationResult {
    EvaluationReport report;
    // Pooled held-out predictions ordered by (repeat, ascent index).
    std::vector<double> predictions;
    std::vector<Outcome> actuals;
    std::vector<FitReport> fits; // one per (repeat, fold)
};

// Fits on the training folds only and scores each held-out ascent with the
// climber's rating at the nearest trained period (earlier on ties). Entities
// without training ascents keep their prior means.
inline CrossValidationResult cross_validate(const CleanDataset& data, const Hyperparameters& hyper,
                                            const FoldPlan& plan, const FitOptions& options = {}) {
    if (plan.fold_of.size() != static_cast<std::size_t>(plan.repeats)) {
        throw ValidationError("cross_validate: fold plan has the wrong number of repeats");
    }
    for (const auto& folds : plan.fold_of) {
        if (folds.size() != data.ascents.size()) throw ValidationError("cross_validate: fold plan does not match dataset");
    }

    CrossValidationResult out;
    out.predictions.reserve(data.ascents.size() * static_cast<std::size_t>(plan.repeats));
    for (int rep = 0; rep < plan.repeats; ++rep) {
        const auto& folds = plan.fold_of[static_cast<std::size_t>(rep)];
        std::vector<double> predictions(data.ascents.size(), 0.0);
        for (int fold = 0; fold < plan.k; ++fold) {
            CleanDataset train;
            train.routes = data.routes;
            train.climbers = data.climbers;
            for (std::size_t i = 0; i < data.ascents.size(); ++i) {
                if (folds[i] != static_cast<std::uint32_t>(fold)) train.ascents.push_back(data.ascents[i]);
            }
            auto fitted = fit(train, hyper, options);
            out.fits.push_back(fitted.report);
            for (std::size_t i = 0; i < data.ascents.size(); ++i) {
                if (folds[i] != static_cast<std::uint32_t>(fold)) continue;
                const auto& a = data.ascents[i];
                predictions[i] = predict_success(fitted.state, a.climber, a.route, a.week);
            }
        }
        out.predictions.insert(out.predictions.end(), predictions.begin(), predictions.end());
        for (const auto& a : data.ascents) out.actuals.push_back(a.outcome);
    }
    out.report = compute_metrics(out.predictions, out.actuals);
    return out;
}

} // namespace climbing
