#pragma once

// On-disk formats: clean dataset directories, fitted ratings, reports and
// plot data. Floating-point values are written with 9 significant digits.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "climbing/csv.hpp"
#include "climbing/dataset.hpp"
#include "climbing/error.hpp"
#include "climbing/evaluation.hpp"
#include "climbing/ingest.hpp"
#include "climbing/solver.hpp"
#include "climbing/synthetic.hpp"

namespace climbing::io {

namespace fs = std::filesystem;

inline std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return in;
}

inline std::vector<csv::Record> read_csv_file(const fs::path& path) {
    auto in = open_input(path);
    auto records = csv::read(in);
    if (records.empty()) throw ParseError(path.string() + ": missing header line");
    return records;
}

[[noreturn]] inline void bad_row(const fs::path& path, const csv::Record& rec, const std::string& what) {
    throw ParseError(path.string() + ": line " + std::to_string(rec.line) + ": " + what);
}

inline const std::string& field(const fs::path& path, const csv::Record& rec, std::size_t col) {
    if (col >= rec.fields.size()) bad_row(path, rec, "too few fields");
    return rec.fields[col];
}

template <typename Int>
Int int_field(const fs::path& path, const csv::Record& rec, std::size_t col) {
    const auto v = csv::parse_int<Int>(trim(field(path, rec, col)));
    if (!v) bad_row(path, rec, "expected an integer, found '" + rec.fields[col] + "'");
    return *v;
}

inline double real_field(const fs::path& path, const csv::Record& rec, std::size_t col) {
    const auto v = csv::parse_real(trim(field(path, rec, col)));
    if (!v || !std::isfinite(*v)) bad_row(path, rec, "expected a finite number, found '" + rec.fields[col] + "'");
    return *v;
}

// ---------------------------------------------------------------------------
// Clean dataset directory: ascents.csv, routes.csv, climbers.csv, provenance.txt

inline void write_provenance(std::ostream& out, const Provenance& p) {
    out << "rows_read=" << p.rows_read << '\n'
        << "rows_kept=" << p.rows_kept << '\n'
        << "dropped_ambiguous=" << p.dropped_ambiguous << '\n'
        << "dropped_non_ewbank=" << p.dropped_non_ewbank << '\n'
        << "dropped_route_min_ascents=" << p.dropped_route_min_ascents << '\n'
        << "dropped_climber_all_success=" << p.dropped_climber_all_success << '\n'
        << "routes_dropped=" << p.routes_dropped << '\n'
        << "climbers_dropped=" << p.climbers_dropped << '\n'
        << "filter_rounds=" << p.filter_rounds << '\n';
}

inline Provenance read_provenance(std::istream& in) {
    Provenance p;
    const std::unordered_map<std::string, std::size_t Provenance::*> keys{
        {"rows_read", &Provenance::rows_read},
        {"rows_kept", &Provenance::rows_kept},
        {"dropped_ambiguous", &Provenance::dropped_ambiguous},
        {"dropped_non_ewbank", &Provenance::dropped_non_ewbank},
        {"dropped_route_min_ascents", &Provenance::dropped_route_min_ascents},
        {"dropped_climber_all_success", &Provenance::dropped_climber_all_success},
        {"routes_dropped", &Provenance::routes_dropped},
        {"climbers_dropped", &Provenance::climbers_dropped},
        {"filter_rounds", &Provenance::filter_rounds},
    };
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const auto it = keys.find(trim(line.substr(0, eq)));
        if (it == keys.end()) continue;
        if (auto v = csv::parse_int<std::size_t>(trim(line.substr(eq + 1)))) p.*(it->second) = *v;
    }
    return p;
}

inline void write_dataset(const fs::path& dir, const CleanDataset& data) {
    fs::create_directories(dir);
    {
        auto out = open_output(dir / "ascents.csv");
        out << "climber_idx,route_idx,week,outcome\n";
        for (const auto& a : data.ascents) {
            out << a.climber << ',' << a.route << ',' << a.week << ',' << (a.outcome == Outcome::Success ? 1 : 0)
                << '\n';
        }
    }
    {
        auto out = open_output(dir / "routes.csv");
        out << "route_idx,route_id,grade\n";
        for (std::size_t r = 0; r < data.routes.size(); ++r) {
            out << r << ',' << csv::escape(data.routes[r].id) << ',' << data.routes[r].grade << '\n';
        }
    }
    {
        auto out = open_output(dir / "climbers.csv");
        out << "climber_idx,climber_id\n";
        for (std::size_t c = 0; c < data.climbers.size(); ++c) {
            out << c << ',' << csv::escape(data.climbers[c]) << '\n';
        }
    }
    auto out = open_output(dir / "provenance.txt");
    write_provenance(out, data.provenance);
}

// Reads a dataset directory. climbers.csv and provenance.txt are optional;
// without climbers.csv, climber ids are their indexes.
inline CleanDataset read_dataset(const fs::path& dir) {
    CleanDataset data;

    const auto routes_path = dir / "routes.csv";
    const auto routes = read_csv_file(routes_path);
    const csv::Header rh(routes.front(), {"route_idx", "route_id", "grade"});
    for (std::size_t i = 1; i < routes.size(); ++i) {
        const auto& rec = routes[i];
        const auto idx = int_field<std::size_t>(routes_path, rec, rh.at("route_idx"));
        if (idx != data.routes.size()) bad_row(routes_path, rec, "route_idx must be 0, 1, 2, ... in order");
        data.routes.push_back(RouteInfo{field(routes_path, rec, rh.at("route_id")),
                                        int_field<int>(routes_path, rec, rh.at("grade"))});
    }

    const auto ascents_path = dir / "ascents.csv";
    const auto ascents = read_csv_file(ascents_path);
    const csv::Header ah(ascents.front(), {"climber_idx", "route_idx", "week", "outcome"});
    std::size_t max_climber = 0;
    for (std::size_t i = 1; i < ascents.size(); ++i) {
        const auto& rec = ascents[i];
        AscentRecord a;
        a.climber = int_field<EntityIndex>(ascents_path, rec, ah.at("climber_idx"));
        a.route = int_field<EntityIndex>(ascents_path, rec, ah.at("route_idx"));
        a.week = int_field<Week>(ascents_path, rec, ah.at("week"));
        const int outcome = int_field<int>(ascents_path, rec, ah.at("outcome"));
        if (outcome != 0 && outcome != 1) bad_row(ascents_path, rec, "outcome must be 0 or 1");
        a.outcome = outcome == 1 ? Outcome::Success : Outcome::Failure;
        if (a.route >= data.routes.size()) bad_row(ascents_path, rec, "route_idx not present in routes.csv");
        max_climber = std::max<std::size_t>(max_climber, a.climber + 1);
        data.ascents.push_back(a);
    }

    const auto climbers_path = dir / "climbers.csv";
    if (fs::exists(climbers_path)) {
        const auto climbers = read_csv_file(climbers_path);
        const csv::Header ch(climbers.front(), {"climber_idx", "climber_id"});
        for (std::size_t i = 1; i < climbers.size(); ++i) {
            const auto& rec = climbers[i];
            const auto idx = int_field<std::size_t>(climbers_path, rec, ch.at("climber_idx"));
            if (idx != data.climbers.size()) bad_row(climbers_path, rec, "climber_idx must be 0, 1, 2, ... in order");
            data.climbers.push_back(field(climbers_path, rec, ch.at("climber_id")));
        }
        if (data.climbers.size() < max_climber) {
            throw ParseError(ascents_path.string() + ": climber_idx not present in climbers.csv");
        }
    } else {
        for (std::size_t c = 0; c < max_climber; ++c) data.climbers.push_back(std::to_string(c));
    }

    const auto prov_path = dir / "provenance.txt";
    if (fs::exists(prov_path)) {
        auto in = open_input(prov_path);
        data.provenance = read_provenance(in);
    } else {
        data.provenance.rows_read = data.provenance.rows_kept = data.ascents.size();
    }
    return data;
}

// ---------------------------------------------------------------------------
// Fitted ratings

inline void write_ratings(const fs::path& dir, const ModelState& state) {
    {
        auto out = open_output(dir / "route_ratings.csv");
        out << "route_idx,route_id,grade,rating\n";
        for (std::size_t r = 0; r < state.routes.size(); ++r) {
            const auto& node = state.routes[r];
            out << r << ',' << csv::escape(node.id) << ',' << node.grade << ',' << csv::format_real(node.rating) << '\n';
        }
    }
    auto out = open_output(dir / "climber_ratings.csv");
    out << "climber_idx,climber_id,week,rating\n";
    for (std::size_t c = 0; c < state.climbers.size(); ++c) {
        const auto& climber = state.climbers[c];
        for (std::size_t k = 0; k < climber.weeks.size(); ++k) {
            out << c << ',' << csv::escape(climber.id) << ',' << climber.weeks[k] << ','
                << csv::format_real(climber.ratings[k]) << '\n';
        }
    }
}

inline void write_fit_report(std::ostream& out, const FitReport& report) {
    out << "iterations=" << report.iterations << '\n'
        << "converged=" << (report.converged ? "true" : "false") << '\n'
        << "initial_log_likelihood=" << csv::format_real(report.initial_bt_log_likelihood) << '\n'
        << "final_log_likelihood=" << csv::format_real(report.final_bt_log_likelihood) << '\n';
}

// Fitted ratings loaded back for prediction, keyed by entity id.
struct RatingTable {
    std::unordered_map<std::string, RouteNode> routes;
    std::unordered_map<std::string, ClimberHistory> climbers;
};

inline RatingTable read_ratings(const fs::path& dir) {
    RatingTable table;
    const auto routes_path = dir / "route_ratings.csv";
    const auto routes = read_csv_file(routes_path);
    const csv::Header rh(routes.front(), {"route_id", "grade", "rating"});
    for (std::size_t i = 1; i < routes.size(); ++i) {
        const auto& rec = routes[i];
        RouteNode node;
        node.id = field(routes_path, rec, rh.at("route_id"));
        node.grade = int_field<int>(routes_path, rec, rh.at("grade"));
        node.rating = real_field(routes_path, rec, rh.at("rating"));
        table.routes[node.id] = std::move(node);
    }

    const auto climbers_path = dir / "climber_ratings.csv";
    const auto climbers = read_csv_file(climbers_path);
    const csv::Header ch(climbers.front(), {"climber_id", "week", "rating"});
    for (std::size_t i = 1; i < climbers.size(); ++i) {
        const auto& rec = climbers[i];
        const auto& id = field(climbers_path, rec, ch.at("climber_id"));
        auto& history = table.climbers[id];
        history.id = id;
        const auto week = int_field<Week>(climbers_path, rec, ch.at("week"));
        if (!history.weeks.empty() && week <= history.weeks.back()) {
            bad_row(climbers_path, rec, "weeks must be strictly increasing per climber");
        }
        history.weeks.push_back(week);
        history.ratings.push_back(real_field(climbers_path, rec, ch.at("rating")));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Evaluation outputs

inline void write_report_text(std::ostream& out, const EvaluationReport& rep) {
    out << "count=" << rep.count << '\n'
        << "log_loss=" << csv::format_real(rep.log_loss) << '\n'
        << "accuracy=" << csv::format_real(rep.accuracy) << '\n'
        << "balanced_accuracy=" << csv::format_real(rep.balanced_accuracy) << '\n'
        << "precision=" << csv::format_real(rep.precision) << '\n'
        << "recall=" << csv::format_real(rep.recall) << '\n'
        << "tp=" << rep.contingency.tp << '\n'
        << "fp=" << rep.contingency.fp << '\n'
        << "fn=" << rep.contingency.fn << '\n'
        << "tn=" << rep.contingency.tn << '\n'
        << "success_rate=" << csv::format_real(rep.success_rate) << '\n'
        << "baseline_log_loss=" << csv::format_real(rep.baseline_log_loss) << '\n'
        << "baseline_accuracy=" << csv::format_real(rep.baseline_accuracy) << '\n'
        << "baseline_balanced_accuracy=" << csv::format_real(rep.baseline_balanced_accuracy) << '\n'
        << "baseline_precision=" << csv::format_real(rep.baseline_precision) << '\n';
}

inline nlohmann::ordered_json report_json(const EvaluationReport& rep) {
    nlohmann::ordered_json j;
    j["count"] = rep.count;
    j["log_loss"] = rep.log_loss;
    j["accuracy"] = rep.accuracy;
    j["balanced_accuracy"] = rep.balanced_accuracy;
    j["precision"] = rep.precision;
    j["recall"] = rep.recall;
    j["contingency"] = {{"tp", rep.contingency.tp},
                        {"fp", rep.contingency.fp},
                        {"fn", rep.contingency.fn},
                        {"tn", rep.contingency.tn}};
    j["baseline"] = {{"success_rate", rep.success_rate},
                     {"log_loss", rep.baseline_log_loss},
                     {"accuracy", rep.baseline_accuracy},
                     {"balanced_accuracy", rep.baseline_balanced_accuracy},
                     {"precision", rep.baseline_precision}};
    return j;
}

inline void write_pr_curve(std::ostream& out, const std::vector<PrPoint>& curve) {
    out << "threshold,precision,recall,classifier\n";
    for (const auto& p : curve) {
        out << csv::format_real(p.threshold) << ',' << csv::format_real(p.precision) << ','
            << csv::format_real(p.recall) << ',' << (p.classifier ? 1 : 0) << '\n';
    }
}

inline void write_ratings_vs_grades(std::ostream& out, const ModelState& state) {
    out << "route_id,grade,prior_mean,rating\n";
    for (const auto& node : state.routes) {
        out << csv::escape(node.id) << ',' << node.grade << ',' << csv::format_real(node.prior_mean) << ','
            << csv::format_real(node.rating) << '\n';
    }
}

inline LinearFit ratings_grade_fit(const ModelState& state) {
    std::vector<double> grades, ratings;
    for (const auto& node : state.routes) {
        grades.push_back(static_cast<double>(node.grade));
        ratings.push_back(node.rating);
    }
    return linear_fit(grades, ratings);
}

// ---------------------------------------------------------------------------
// Synthetic ground truth

inline void write_truth(std::ostream& out, const SyntheticWorld& world) {
    out << "entity_type,entity_idx,week,true_rating\n";
    for (std::size_t r = 0; r < world.route_ratings.size(); ++r) {
        out << "route," << r << ",," << csv::format_real(world.route_ratings[r]) << '\n';
    }
    for (std::size_t c = 0; c < world.climber_ratings.size(); ++c) {
        for (std::size_t k = 0; k < world.climber_ratings[c].size(); ++k) {
            out << "climber," << c << ',' << world.climber_weeks[c][k] << ','
                << csv::format_real(world.climber_ratings[c][k]) << '\n';
        }
    }
}

} // namespace climbing::io
