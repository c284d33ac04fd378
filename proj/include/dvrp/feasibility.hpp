#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/network.hpp"
#include "dvrp/state.hpp"
#include "dvrp/types.hpp"

namespace dvrp {

// Vehicle's current position and the current clock; every schedule is
// validated and canonicalized relative to this point.
struct Anchor {
    Location location;
    Time time = 0.0;
};

enum class ViolationKind {
    none,
    ordering,
    travel_time,
    window,
    capacity,
    pairing,
    shift_end,
    coverage,
    assignment,
};

struct PlanVerdict {
    ViolationKind kind = ViolationKind::none;
    std::size_t stop_index = 0;
    std::string detail;

    bool feasible() const { return kind == ViolationKind::none; }
    explicit operator bool() const { return feasible(); }
};

inline const char* to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::none: return "feasible";
        case ViolationKind::ordering: return "ordering";
        case ViolationKind::travel_time: return "travel-time";
        case ViolationKind::window: return "window";
        case ViolationKind::capacity: return "capacity";
        case ViolationKind::pairing: return "pairing";
        case ViolationKind::shift_end: return "shift-end";
        case ViolationKind::coverage: return "coverage";
        case ViolationKind::assignment: return "assignment";
    }
    return "?";
}

// Rewrites departures into earliest-feasible canonical form: each departure
// is the arrival at the stop, pushed to earliest_pickup for pickups.
inline void canonicalize(RoutePlan& plan, const TravelTimeBackend& backend, const Anchor& anchor,
                         const std::map<RequestId, Request>& requests) {
    Location prev = anchor.location;
    Time dep = anchor.time;
    for (auto& stop : plan.stops) {
        Time arrival = dep + backend.travel_time_raw(prev, stop.location);
        dep = arrival;
        if (stop.kind == StopKind::pickup)
            dep = std::max(dep, requests.at(stop.request_id).earliest_pickup);
        stop.departure = dep;
        prev = stop.location;
    }
}

// Checks a single plan, with its stored departure times, against the
// operational constraints. Returns the first violation found.
inline PlanVerdict validate_plan(const RoutePlan& plan, const Vehicle& vehicle,
                                 const TravelTimeBackend& backend, const Anchor& anchor,
                                 int onboard_load,
                                 const std::map<RequestId, Request>& requests,
                                 const std::set<RequestId>* onboard = nullptr) {
    // pairing: every pickup has its dropoff later; a dropoff without a
    // preceding pickup must be an onboard request
    std::set<RequestId> picked;
    std::set<RequestId> dropped;
    for (std::size_t j = 0; j < plan.stops.size(); ++j) {
        const auto& s = plan.stops[j];
        if (s.kind == StopKind::pickup) {
            if (picked.count(s.request_id) || dropped.count(s.request_id))
                return {ViolationKind::pairing, j, "duplicate stop for request"};
            picked.insert(s.request_id);
        } else {
            if (dropped.count(s.request_id))
                return {ViolationKind::pairing, j, "duplicate dropoff for request"};
            if (!picked.count(s.request_id)) {
                bool is_onboard = onboard && onboard->count(s.request_id);
                if (onboard && !is_onboard)
                    return {ViolationKind::pairing, j, "dropoff without pickup or onboard status"};
            }
            dropped.insert(s.request_id);
        }
    }
    for (auto id : picked)
        if (!dropped.count(id))
            return {ViolationKind::pairing, plan.stops.size(), "pickup without dropoff"};

    Location prev = anchor.location;
    Time prev_dep = anchor.time;
    int load = onboard_load;
    for (std::size_t j = 0; j < plan.stops.size(); ++j) {
        const auto& s = plan.stops[j];
        if (j > 0 && s.departure < plan.stops[j - 1].departure - kTimeEps)
            return {ViolationKind::ordering, j, "departures not non-decreasing"};
        Duration leg = backend.travel_time_raw(prev, s.location);
        Time arrival = prev_dep + leg;
        if (!leq(arrival, s.departure))
            return {ViolationKind::travel_time, j, "cannot reach stop by its departure time"};
        const Request& r = requests.at(s.request_id);
        if (s.kind == StopKind::pickup) {
            if (!geq(s.departure, r.earliest_pickup))
                return {ViolationKind::window, j, "pickup departs before earliest pickup"};
            if (s.delta != r.passengers)
                return {ViolationKind::pairing, j, "pickup delta does not match party size"};
        } else {
            if (!leq(arrival, r.latest_dropoff) || !leq(s.departure, r.latest_dropoff))
                return {ViolationKind::window, j, "dropoff later than latest dropoff"};
            if (s.delta != -r.passengers)
                return {ViolationKind::pairing, j, "dropoff delta does not match party size"};
        }
        load += s.delta;
        if (load > vehicle.capacity)
            return {ViolationKind::capacity, j, "capacity exceeded"};
        if (load < 0) return {ViolationKind::capacity, j, "load below zero"};
        prev = s.location;
        prev_dep = s.departure;
    }

    if (!plan.stops.empty()) {
        Duration back = backend.travel_time_raw(prev, vehicle.depot);
        if (!leq(prev_dep + back, vehicle.shift_end))
            return {ViolationKind::shift_end, plan.stops.size() - 1,
                    "cannot return to depot by shift end"};
    }
    return {};
}

// Per-stop slack computed by one forward pass (earliest arrivals) and one
// backward pass (latest arrivals).
struct SlackProfile {
    std::vector<Time> earliest_arrival;
    std::vector<Time> latest_arrival;
    std::vector<Duration> slack;
};

inline SlackProfile compute_slack(const RoutePlan& plan, const Vehicle& vehicle,
                                  const TravelTimeBackend& backend, const Anchor& anchor,
                                  const std::map<RequestId, Request>& requests) {
    const std::size_t n = plan.stops.size();
    SlackProfile out;
    out.earliest_arrival.resize(n);
    out.latest_arrival.resize(n);
    out.slack.resize(n);
    if (n == 0) return out;

    Location prev = anchor.location;
    Time dep = anchor.time;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& s = plan.stops[j];
        Time arrival = dep + backend.travel_time_raw(prev, s.location);
        out.earliest_arrival[j] = arrival;
        dep = arrival;
        if (s.kind == StopKind::pickup)
            dep = std::max(dep, requests.at(s.request_id).earliest_pickup);
        prev = s.location;
    }

    for (std::size_t jj = n; jj-- > 0;) {
        const auto& s = plan.stops[jj];
        Time latest;
        if (jj + 1 == n) {
            latest = vehicle.shift_end - backend.travel_time_raw(s.location, vehicle.depot);
        } else {
            const auto& next = plan.stops[jj + 1];
            latest = out.latest_arrival[jj + 1] - backend.travel_time_raw(s.location, next.location);
        }
        if (s.kind == StopKind::dropoff)
            latest = std::min(latest, requests.at(s.request_id).latest_dropoff);
        out.latest_arrival[jj] = latest;
        if (out.earliest_arrival[jj] > latest + kTimeEps)
            throw ValidationError("compute_slack requires a feasible plan");
        out.slack[jj] = std::max(0.0, latest - out.earliest_arrival[jj]);
    }
    return out;
}

// Fleet-level check: every plan individually feasible, every pending
// accepted request on exactly one plan, every onboard request's dropoff on
// its current vehicle, and no stops for unknown or unaccepted requests.
inline PlanVerdict validate_fleet(const FleetPlans& plans, const ServiceState& state) {
    const auto& vehicles = state.vehicles();
    if (plans.size() != vehicles.size())
        return {ViolationKind::coverage, 0, "plan count does not match fleet size"};

    std::map<RequestId, int> pickup_seen;
    std::map<RequestId, int> dropoff_seen;
    for (const auto& plan : plans)
        for (const auto& s : plan.stops)
            if (!state.requests().count(s.request_id))
                return {ViolationKind::coverage, 0,
                        "stop for unknown request " + std::to_string(s.request_id)};
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const auto& vs = vehicles[i];
        Anchor anchor{state.position(i), state.clock()};
        auto verdict = validate_plan(plans[i], vs.spec, state.backend(), anchor, vs.load,
                                     state.requests(), &vs.onboard);
        if (!verdict) {
            verdict.detail = "vehicle " + std::to_string(vs.spec.id) + ": " + verdict.detail;
            return verdict;
        }
        for (const auto& s : plans[i].stops) {
            if (s.kind == StopKind::pickup)
                ++pickup_seen[s.request_id];
            else
                ++dropoff_seen[s.request_id];
            if (s.kind == StopKind::dropoff && vs.onboard.count(s.request_id) == 0 &&
                state.pending().count(s.request_id) == 0)
                return {ViolationKind::coverage, 0,
                        "stop for request " + std::to_string(s.request_id) +
                            " which is neither pending nor onboard"};
        }
    }

    for (auto id : state.pending()) {
        if (pickup_seen[id] != 1 || dropoff_seen[id] != 1)
            return {ViolationKind::coverage, 0,
                    "pending request " + std::to_string(id) + " not covered exactly once"};
    }
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        for (auto id : vehicles[i].onboard) {
            bool found = false;
            for (const auto& s : plans[i].stops)
                if (s.kind == StopKind::dropoff && s.request_id == id) found = true;
            if (!found)
                return {ViolationKind::assignment, 0,
                        "onboard request " + std::to_string(id) + " missing dropoff on vehicle " +
                            std::to_string(vehicles[i].spec.id)};
        }
    }
    std::size_t total_pick = 0, total_drop = 0;
    for (auto& [id, c] : pickup_seen) total_pick += static_cast<std::size_t>(c);
    for (auto& [id, c] : dropoff_seen) total_drop += static_cast<std::size_t>(c);
    if (total_pick != state.pending().size() ||
        total_drop != state.pending().size() + state.onboard_count())
        return {ViolationKind::coverage, 0, "plans contain stops for non-accepted requests"};
    return {};
}

}  // namespace dvrp
