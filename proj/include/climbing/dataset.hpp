#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "climbing/model.hpp"

namespace climbing {

using EntityIndex = std::uint32_t;
using Week = std::int64_t;

// One ascent: the unit observation of the likelihood.
struct AscentRecord {
    EntityIndex climber = 0;
    EntityIndex route = 0;
    Week week = 0;
    Outcome outcome = Outcome::Success;

    friend bool operator==(const AscentRecord&, const AscentRecord&) = default;
};

struct RouteInfo {
    std::string id;
    int grade = 0;

    friend bool operator==(const RouteInfo&, const RouteInfo&) = default;
};

// Row counts per preprocessing rule. rows_read == rows_kept + dropped().
struct Provenance {
    std::size_t rows_read = 0;
    std::size_t dropped_ambiguous = 0;
    std::size_t dropped_non_ewbank = 0;
    std::size_t dropped_route_min_ascents = 0;
    std::size_t dropped_climber_all_success = 0;
    std::size_t routes_dropped = 0;
    std::size_t climbers_dropped = 0;
    std::size_t filter_rounds = 0;
    std::size_t rows_kept = 0;

    std::size_t dropped() const {
        return dropped_ambiguous + dropped_non_ewbank + dropped_route_min_ascents + dropped_climber_all_success;
    }

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CleanDataset {
    std::vector<AscentRecord> ascents;
    std::vector<RouteInfo> routes;
    std::vector<std::string> climbers;
    Provenance provenance;

    bool empty() const { return ascents.empty(); }
};

// Lists violated dataset invariants; empty when the dataset is clean.
inline std::vector<std::string> invariant_violations(const CleanDataset& data) {
    std::vector<std::string> problems;
    std::vector<std::size_t> route_count(data.routes.size(), 0);
    std::vector<std::size_t> climber_failures(data.climbers.size(), 0);
    std::vector<std::size_t> climber_count(data.climbers.size(), 0);
    for (const auto& a : data.ascents) {
        if (a.route >= data.routes.size() || a.climber >= data.climbers.size()) {
            problems.push_back("ascent references an unknown entity");
            continue;
        }
        if (a.outcome != Outcome::Success && a.outcome != Outcome::Failure) {
            problems.push_back("ascent with an invalid outcome");
        }
        ++route_count[a.route];
        ++climber_count[a.climber];
        if (a.outcome == Outcome::Failure) ++climber_failures[a.climber];
    }
    for (std::size_t r = 0; r < route_count.size(); ++r) {
        if (route_count[r] < 2) problems.push_back("route " + data.routes[r].id + " has fewer than 2 ascents");
    }
    for (std::size_t c = 0; c < climber_failures.size(); ++c) {
        if (climber_count[c] == 0) problems.push_back("climber " + data.climbers[c] + " has no ascents");
        else if (climber_failures[c] == 0) problems.push_back("climber " + data.climbers[c] + " has no unsuccessful ascent");
    }
    return problems;
}

namespace detail {

// Repeatedly drops routes with < 2 ascents and climbers without a failure
// until neither rule removes anything, then renumbers surviving entities in
// order of first appearance. Ascent order is preserved.
inline CleanDataset filter_and_compact(std::vector<AscentRecord> ascents,
                                       const std::vector<RouteInfo>& routes,
                                       const std::vector<std::string>& climbers,
                                       Provenance provenance) {
    std::vector<bool> keep(ascents.size(), true);
    std::vector<bool> route_dropped(routes.size(), false);
    std::vector<bool> climber_dropped(climbers.size(), false);
    bool changed = true;
    while (changed) {
        changed = false;
        ++provenance.filter_rounds;

        std::vector<std::size_t> route_count(routes.size(), 0);
        for (std::size_t i = 0; i < ascents.size(); ++i) {
            if (keep[i]) ++route_count[ascents[i].route];
        }
        for (std::size_t i = 0; i < ascents.size(); ++i) {
            if (keep[i] && route_count[ascents[i].route] < 2) {
                keep[i] = false;
                ++provenance.dropped_route_min_ascents;
                if (!route_dropped[ascents[i].route]) {
                    route_dropped[ascents[i].route] = true;
                    ++provenance.routes_dropped;
                }
                changed = true;
            }
        }

        std::vector<std::size_t> failures(climbers.size(), 0);
        for (std::size_t i = 0; i < ascents.size(); ++i) {
            if (keep[i] && ascents[i].outcome == Outcome::Failure) ++failures[ascents[i].climber];
        }
        for (std::size_t i = 0; i < ascents.size(); ++i) {
            if (keep[i] && failures[ascents[i].climber] == 0) {
                keep[i] = false;
                ++provenance.dropped_climber_all_success;
                if (!climber_dropped[ascents[i].climber]) {
                    climber_dropped[ascents[i].climber] = true;
                    ++provenance.climbers_dropped;
                }
                changed = true;
            }
        }
    }

    constexpr EntityIndex unassigned = std::numeric_limits<EntityIndex>::max();
    std::vector<EntityIndex> route_map(routes.size(), unassigned);
    std::vector<EntityIndex> climber_map(climbers.size(), unassigned);
    CleanDataset out;
    for (std::size_t i = 0; i < ascents.size(); ++i) {
        if (!keep[i]) continue;
        AscentRecord a = ascents[i];
        if (climber_map[a.climber] == unassigned) {
            climber_map[a.climber] = static_cast<EntityIndex>(out.climbers.size());
            out.climbers.push_back(climbers[a.climber]);
        }
        if (route_map[a.route] == unassigned) {
            route_map[a.route] = static_cast<EntityIndex>(out.routes.size());
            out.routes.push_back(routes[a.route]);
        }
        a.climber = climber_map[a.climber];
        a.route = route_map[a.route];
        out.ascents.push_back(a);
    }
    provenance.rows_kept = out.ascents.size();
    out.provenance = provenance;
    return out;
}

} // namespace detail

} // namespace climbing
