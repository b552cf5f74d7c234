#pragma once

// Subcommand implementations behind the command-line tool. Each returns the
// process exit code: 0 success, 1 input or validation error, 2 empty result.
// Data goes to files; diagnostics and warnings go to `err`.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "climbing/error.hpp"
#include "climbing/evaluation.hpp"
#include "climbing/ingest.hpp"
#include "climbing/io.hpp"
#include "climbing/solver.hpp"
#include "climbing/synthetic.hpp"

namespace climbing::commands {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kInputError = 1, kEmptyResult = 2 };

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const EmptyDatasetError& e) {
        err << "error: " << e.what() << '\n';
        return kEmptyResult;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
}

struct PreprocessArgs {
    fs::path input;
    std::optional<fs::path> tick_mapping;
    fs::path out_dir;
};

inline int run_preprocess(const PreprocessArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const TickMapping mapping =
            args.tick_mapping ? TickMapping::load_file(args.tick_mapping->string()) : TickMapping::defaults();
        auto in = io::open_input(args.input);
        const auto rows = parse_ascent_log(in);
        const auto data = preprocess(rows, mapping);
        io::write_dataset(args.out_dir, data);
        return int{kOk};
    });
}

struct FitArgs {
    fs::path dataset_dir;
    fs::path out_dir;
    Hyperparameters hyper;
    FitOptions options;
};

inline int run_fit(const FitArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const auto data = io::read_dataset(args.dataset_dir);
        const auto result = fit(data, args.hyper, args.options);
        io::write_ratings(args.out_dir, result.state);
        auto report = io::open_output(args.out_dir / "fit_report.txt");
        io::write_fit_report(report, result.report);
        if (!result.report.converged) {
            err << "warning: fit did not converge within " << args.options.max_iterations << " iterations\n";
        }
        return int{kOk};
    });
}

struct PredictArgs {
    fs::path ratings_dir;
    fs::path queries;
    fs::path output; // "-" for standard output
    Hyperparameters hyper;
};

// Query CSV columns: climber_id, route_id, week (an integer week index or a
// YYYY-MM-DD date), and optionally grade, used for the prior mean of routes
// missing from the ratings.
inline int run_predict(const PredictArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const auto table = io::read_ratings(args.ratings_dir);
        const auto records = io::read_csv_file(args.queries);
        const csv::Header header(records.front(), {"climber_id", "route_id", "week"});
        const auto grade_col = header.find("grade");

        std::ostringstream body;
        body << "climber_id,route_id,week,probability,fallback\n";
        std::size_t bad = 0;
        for (std::size_t i = 1; i < records.size(); ++i) {
            const auto& rec = records[i];
            if (rec.fields.size() != header.size()) {
                err << args.queries.string() << ": line " << rec.line << ": expected " << header.size()
                    << " fields\n";
                ++bad;
                continue;
            }
            const auto& climber_id = rec.fields[header.at("climber_id")];
            const auto& route_id = rec.fields[header.at("route_id")];
            const std::string week_text = trim(rec.fields[header.at("week")]);
            std::optional<Week> week = csv::parse_int<Week>(week_text);
            if (!week) {
                if (const auto date = parse_date(week_text)) week = quantize_week(*date);
            }
            std::optional<int> grade;
            if (grade_col && !trim(rec.fields[*grade_col]).empty()) {
                grade = csv::parse_int<int>(trim(rec.fields[*grade_col]));
                if (!grade) {
                    err << args.queries.string() << ": line " << rec.line << ": invalid grade\n";
                    ++bad;
                    continue;
                }
            }
            if (!week) {
                err << args.queries.string() << ": line " << rec.line << ": invalid week '" << week_text << "'\n";
                ++bad;
                continue;
            }

            bool climber_fallback = true;
            Rating climber_rating = 0.0;
            if (const auto it = table.climbers.find(climber_id); it != table.climbers.end()) {
                const auto lookup = climber_rating_at(it->second, *week);
                climber_rating = lookup.rating;
                climber_fallback = lookup.fallback;
            }
            bool route_fallback = true;
            Rating route_rating = grade ? route_prior_mean(*grade, args.hyper) : 0.0;
            if (const auto it = table.routes.find(route_id); it != table.routes.end()) {
                route_rating = it->second.rating;
                route_fallback = false;
            }
            const char* flag = climber_fallback ? (route_fallback ? "both" : "climber")
                                                : (route_fallback ? "route" : "none");
            body << csv::escape(climber_id) << ',' << csv::escape(route_id) << ',' << *week << ','
                 << csv::format_real(bt_probability(climber_rating, route_rating)) << ',' << flag << '\n';
        }

        if (args.output == "-") {
            std::cout << body.str();
        } else {
            auto out = io::open_output(args.output);
            out << body.str();
        }
        return bad == 0 ? int{kOk} : int{kInputError};
    });
}

struct EvaluateArgs {
    fs::path dataset_dir;
    fs::path out_dir;
    Hyperparameters hyper;
    FitOptions options;
};

namespace detail {

inline void write_evaluation(const fs::path& out_dir, const EvaluationReport& report, const std::vector<PrPoint>& curve,
                             const ModelState& full_fit, const FitReport& fit_report, const std::string& mode) {
    const auto grade_fit = io::ratings_grade_fit(full_fit);
    {
        auto out = io::open_output(out_dir / "metrics.txt");
        out << "mode=" << mode << '\n';
        io::write_report_text(out, report);
        out << "ratings_grade_slope=" << csv::format_real(grade_fit.slope) << '\n'
            << "ratings_grade_r_squared=" << csv::format_real(grade_fit.r_squared) << '\n';
    }
    {
        auto j = io::report_json(report);
        j["mode"] = mode;
        j["ratings_vs_grades"] = {{"slope", grade_fit.slope},
                                  {"intercept", grade_fit.intercept},
                                  {"r_squared", grade_fit.r_squared}};
        j["fit"] = {{"iterations", fit_report.iterations},
                    {"converged", fit_report.converged},
                    {"final_log_likelihood", fit_report.final_bt_log_likelihood}};
        auto out = io::open_output(out_dir / "metrics.json");
        out << j.dump(2) << '\n';
    }
    {
        auto out = io::open_output(out_dir / "pr_curve.csv");
        io::write_pr_curve(out, curve);
    }
    auto out = io::open_output(out_dir / "ratings_vs_grades.csv");
    io::write_ratings_vs_grades(out, full_fit);
}

} // namespace detail

// In-sample evaluation: fit on everything and score the same ascents.
inline int run_evaluate(const EvaluateArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const auto data = io::read_dataset(args.dataset_dir);
        const auto result = fit(data, args.hyper, args.options);
        if (!result.report.converged) err << "warning: fit did not converge\n";
        const auto predictions = predict_ascents(result.state, data);
        const auto actuals = outcomes_of(data);
        const auto report = compute_metrics(predictions, actuals);
        detail::write_evaluation(args.out_dir, report, precision_recall_curve(predictions, actuals), result.state,
                                 result.report, "in_sample");
        return int{kOk};
    });
}

struct CrossvalArgs {
    fs::path dataset_dir;
    fs::path out_dir;
    Hyperparameters hyper;
    FitOptions options;
    int k = 10;
    int repeats = 3;
    std::uint64_t seed = 1;
};

inline int run_crossval(const CrossvalArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const auto data = io::read_dataset(args.dataset_dir);
        const auto plan = make_fold_plan(data, args.k, args.repeats, args.seed);
        const auto cv = cross_validate(data, args.hyper, plan, args.options);
        std::size_t unconverged = 0;
        for (const auto& f : cv.fits) unconverged += f.converged ? 0 : 1;
        if (unconverged > 0) err << "warning: " << unconverged << " fold fit(s) did not converge\n";
        const auto full = fit(data, args.hyper, args.options);
        detail::write_evaluation(args.out_dir, cv.report, precision_recall_curve(cv.predictions, cv.actuals),
                                 full.state, full.report, "cross_validation");
        return int{kOk};
    });
}

struct SynthArgs {
    WorldParameters world;
    Hyperparameters hyper;
    int ascents_per_climber_period = 20;
    std::uint64_t seed = 1;
    fs::path out_dir;
};

// Writes raw_ascents.csv (the preprocess input format), the filtered dataset
// files and truth.csv.
inline int run_synth(const SynthArgs& args, std::ostream& err = std::cerr) {
    return guarded(err, [&] {
        const auto world = generate_world(args.world, args.hyper, args.seed);
        const auto raw = simulate_raw_ascents(world, args.ascents_per_climber_period, args.seed);
        {
            auto out = io::open_output(args.out_dir / "raw_ascents.csv");
            write_ascent_log(out, to_raw_rows(raw));
        }
        const auto data = simulate_ascents(world, args.ascents_per_climber_period, args.seed);
        io::write_dataset(args.out_dir, data);
        auto out = io::open_output(args.out_dir / "truth.csv");
        io::write_truth(out, world);
        return int{kOk};
    });
}

} // namespace climbing::commands
