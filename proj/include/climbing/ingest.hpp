#pragma once

// Raw ascent-log parsing and preprocessing into a CleanDataset:
// tick reclassification, Ewbank-only filtering, per-route median grade,
// week quantization, and the route/climber removal rules iterated to a fixpoint.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "climbing/csv.hpp"
#include "climbing/dataset.hpp"
#include "climbing/error.hpp"

namespace climbing {

using Date = std::chrono::year_month_day;

struct RawAscentRow {
    std::string climber_id;
    std::string route_id;
    std::string tick_type;
    Date date;
    std::string grade_label;
    std::string grade_system;

    friend bool operator==(const RawAscentRow&, const RawAscentRow&) = default;
};

enum class TickClass { Successful, Unsuccessful, Ambiguous };

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Case-insensitive tick string -> class lookup. Unknown ticks are ambiguous.
class TickMapping {
public:
    static TickMapping defaults() {
        TickMapping m;
        for (auto t : {"onsight", "flash", "redpoint", "pinkpoint", "clean", "send", "top rope clean"}) {
            m.set(t, TickClass::Successful);
        }
        for (auto t : {"dog", "hang dog", "attempt", "retreat", "working", "top rope with rest"}) {
            m.set(t, TickClass::Unsuccessful);
        }
        return m;
    }

    // Reads `tick_string,class` lines; '#' starts a comment. The loaded table
    // replaces the defaults entirely.
    static TickMapping load(std::istream& in) {
        TickMapping m;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (trim(line).empty()) continue;
            const auto comma = line.rfind(',');
            if (comma == std::string::npos) {
                throw ParseError("tick mapping line " + std::to_string(line_no) + ": expected 'tick_string,class'");
            }
            const std::string tick = trim(std::string_view(line).substr(0, comma));
            const std::string cls = to_lower(trim(std::string_view(line).substr(comma + 1)));
            if (tick.empty()) {
                throw ParseError("tick mapping line " + std::to_string(line_no) + ": empty tick string");
            }
            if (cls == "successful" || cls == "success") m.set(tick, TickClass::Successful);
            else if (cls == "unsuccessful" || cls == "failure") m.set(tick, TickClass::Unsuccessful);
            else if (cls == "ambiguous") m.set(tick, TickClass::Ambiguous);
            else throw ParseError("tick mapping line " + std::to_string(line_no) + ": unknown class '" + cls + "'");
        }
        return m;
    }

    static TickMapping load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open tick mapping file '" + path + "'");
        return load(in);
    }

    void set(std::string_view tick, TickClass cls) { table_[to_lower(trim(tick))] = cls; }

    TickClass classify(std::string_view tick) const {
        const auto it = table_.find(to_lower(trim(tick)));
        return it == table_.end() ? TickClass::Ambiguous : it->second;
    }

    std::size_t size() const { return table_.size(); }

private:
    std::unordered_map<std::string, TickClass> table_;
};

inline TickClass classify_tick(std::string_view tick_type, const TickMapping& mapping) {
    return mapping.classify(tick_type);
}

// Strict ISO-8601 YYYY-MM-DD.
inline std::optional<Date> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto y = csv::parse_int<int>(s.substr(0, 4));
    auto m = csv::parse_int<unsigned>(s.substr(5, 2));
    auto d = csv::parse_int<unsigned>(s.substr(8, 2));
    if (!y || !m || !d) return std::nullopt;
    Date date{std::chrono::year{*y}, std::chrono::month{*m}, std::chrono::day{*d}};
    if (!date.ok()) return std::nullopt;
    return date;
}

inline std::string format_date(const Date& date) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buf;
}

// Whole weeks since 1970-01-01, rounding toward negative infinity.
inline Week quantize_week(const Date& date) {
    const auto days = std::chrono::sys_days{date}.time_since_epoch().count();
    Week w = days / 7;
    if (days % 7 < 0) --w;
    return w;
}

// First day of a week index; quantize_week(week_start(w)) == w.
inline Date week_start(Week week) {
    return Date{std::chrono::sys_days{std::chrono::days{week * 7}}};
}

// Lower-middle median, so the result is always one of the inputs.
inline int median_grade(std::vector<int> grades) {
    if (grades.empty()) throw ValidationError("median_grade: empty input");
    const std::size_t mid = (grades.size() - 1) / 2;
    std::nth_element(grades.begin(), grades.begin() + static_cast<std::ptrdiff_t>(mid), grades.end());
    return grades[mid];
}

// Reads the raw ascent CSV. All malformed lines are collected and reported
// together in one ParseError.
inline std::vector<RawAscentRow> parse_ascent_log(std::istream& in) {
    const auto records = csv::read(in);
    if (records.empty()) throw ParseError("missing header line");
    const csv::Header header(records.front(),
                             {"climber_id", "route_id", "tick_type", "date", "grade_label", "grade_system"});
    const auto c_climber = header.at("climber_id");
    const auto c_route = header.at("route_id");
    const auto c_tick = header.at("tick_type");
    const auto c_date = header.at("date");
    const auto c_grade = header.at("grade_label");
    const auto c_system = header.at("grade_system");

    std::vector<RawAscentRow> rows;
    rows.reserve(records.size() - 1);
    std::vector<std::string> errors;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& rec = records[i];
        const std::string where = "line " + std::to_string(rec.line) + ": ";
        if (rec.fields.size() != header.size()) {
            errors.push_back(where + "expected " + std::to_string(header.size()) + " fields, found " +
                             std::to_string(rec.fields.size()));
            continue;
        }
        const auto date = parse_date(trim(rec.fields[c_date]));
        if (!date) {
            errors.push_back(where + "invalid date '" + rec.fields[c_date] + "'");
            continue;
        }
        if (rec.fields[c_climber].empty() || rec.fields[c_route].empty()) {
            errors.push_back(where + "empty climber_id or route_id");
            continue;
        }
        rows.push_back(RawAscentRow{rec.fields[c_climber], rec.fields[c_route], rec.fields[c_tick], *date,
                                    rec.fields[c_grade], rec.fields[c_system]});
    }
    if (!errors.empty()) {
        std::string msg = std::to_string(errors.size()) + " malformed line(s)";
        const std::size_t shown = std::min<std::size_t>(errors.size(), 20);
        for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + errors[i];
        if (shown < errors.size()) msg += "\n  ...";
        throw ParseError(msg);
    }
    return rows;
}

inline void write_ascent_log(std::ostream& out, const std::vector<RawAscentRow>& rows) {
    out << "climber_id,route_id,tick_type,date,grade_label,grade_system\n";
    for (const auto& r : rows) {
        const std::string date = format_date(r.date);
        csv::write_row(out, {r.climber_id, r.route_id, r.tick_type, date, r.grade_label, r.grade_system});
    }
}

inline CleanDataset preprocess(const std::vector<RawAscentRow>& rows, const TickMapping& mapping) {
    Provenance prov;
    prov.rows_read = rows.size();

    struct Kept {
        const RawAscentRow* row;
        Outcome outcome;
        int grade;
    };
    std::vector<Kept> kept;
    kept.reserve(rows.size());
    for (const auto& row : rows) {
        const TickClass cls = classify_tick(row.tick_type, mapping);
        if (cls == TickClass::Ambiguous) {
            ++prov.dropped_ambiguous;
            continue;
        }
        const auto grade = csv::parse_int<int>(trim(row.grade_label));
        if (to_lower(trim(row.grade_system)) != "ewbank" || !grade || *grade <= 0) {
            ++prov.dropped_non_ewbank;
            continue;
        }
        kept.push_back({&row, cls == TickClass::Successful ? Outcome::Success : Outcome::Failure, *grade});
    }

    std::unordered_map<std::string, EntityIndex> climber_index;
    std::unordered_map<std::string, EntityIndex> route_index;
    std::vector<std::string> climbers;
    std::vector<RouteInfo> routes;
    std::vector<std::vector<int>> route_grades;
    std::vector<AscentRecord> ascents;
    ascents.reserve(kept.size());
    for (const auto& k : kept) {
        auto [cit, c_new] = climber_index.try_emplace(k.row->climber_id, static_cast<EntityIndex>(climbers.size()));
        if (c_new) climbers.push_back(k.row->climber_id);
        auto [rit, r_new] = route_index.try_emplace(k.row->route_id, static_cast<EntityIndex>(routes.size()));
        if (r_new) {
            routes.push_back(RouteInfo{k.row->route_id, 0});
            route_grades.emplace_back();
        }
        route_grades[rit->second].push_back(k.grade);
        ascents.push_back(AscentRecord{cit->second, rit->second, quantize_week(k.row->date), k.outcome});
    }
    for (std::size_t r = 0; r < routes.size(); ++r) {
        routes[r].grade = median_grade(std::move(route_grades[r]));
    }

    auto out = detail::filter_and_compact(std::move(ascents), routes, climbers, prov);
    if (out.empty()) {
        const auto& p = out.provenance;
        throw EmptyDatasetError("no ascents survived preprocessing (read " + std::to_string(p.rows_read) +
                                ", ambiguous " + std::to_string(p.dropped_ambiguous) + ", non-ewbank " +
                                std::to_string(p.dropped_non_ewbank) + ", route rule " +
                                std::to_string(p.dropped_route_min_ascents) + ", climber rule " +
                                std::to_string(p.dropped_climber_all_success) + ")");
    }
    return out;
}

// Renders a clean dataset back into raw rows (one canonical tick per outcome,
// the first day of each week, the route's median grade).
inline std::vector<RawAscentRow> to_raw_rows(const CleanDataset& data,
                                             std::string_view success_tick = "redpoint",
                                             std::string_view failure_tick = "dog") {
    std::vector<RawAscentRow> rows;
    rows.reserve(data.ascents.size());
    for (const auto& a : data.ascents) {
        rows.push_back(RawAscentRow{data.climbers[a.climber], data.routes[a.route].id,
                                    std::string(a.outcome == Outcome::Success ? success_tick : failure_tick),
                                    week_start(a.week), std::to_string(data.routes[a.route].grade), "ewbank"});
    }
    return rows;
}

} // namespace climbing
