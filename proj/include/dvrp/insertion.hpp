#pragma once

#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/feasibility.hpp"
#include "dvrp/state.hpp"
#include "dvrp/types.hpp"
#include "dvrp/valuefn.hpp"

namespace dvrp {

struct InsertionCandidate {
    VehicleId vehicle_id = 0;
    std::size_t vehicle_index = 0;
    std::size_t pickup_index = 0;
    std::size_t dropoff_index = 0;  // >= pickup_index
    RoutePlan plan;                 // canonicalized post-insertion plan
    double score = 0.0;             // filled by confirm
};

// A simple-insertion placement: pickup before position `pickup`, dropoff
// before position `dropoff` of the original route (pickup <= dropoff).
struct PositionPair {
    std::size_t pickup = 0;
    std::size_t dropoff = 0;
};

// All (pickup, dropoff) positions at which a stop pair can join a route
// without breaking it. Slack and prefix loads are computed once, so each
// position pair costs amortized constant time; infeasible dropoff chains are
// cut off early. An empty result means no feasible simple insertion.
inline std::vector<PositionPair> feasible_insertion_pairs(
    const RoutePlan& base, const Vehicle& vehicle, const TravelTimeBackend& backend,
    const Anchor& anchor, int onboard_load, const std::map<RequestId, Request>& requests,
    const Location& pickup_loc, const Location& dropoff_loc, int passengers,
    Time earliest_pickup, Time latest_dropoff) {
    std::vector<PositionPair> out;
    const std::size_t n = base.stops.size();
    const Location pickup = backend.resolve(pickup_loc);
    const Location dropoff = backend.resolve(dropoff_loc);

    SlackProfile slack;
    try {
        slack = compute_slack(base, vehicle, backend, anchor, requests);
    } catch (const ValidationError&) {
        return out;  // committed plan too tight under the snapped anchor
    }

    // canonical departures and prefix loads of the base plan
    std::vector<Time> dep(n);
    std::vector<int> load(n + 1);
    load[0] = onboard_load;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& s = base.stops[j];
        dep[j] = slack.earliest_arrival[j];
        if (s.kind == StopKind::pickup)
            dep[j] = std::max(dep[j], requests.at(s.request_id).earliest_pickup);
        load[j + 1] = load[j] + s.delta;
    }
    auto stop_loc = [&](std::size_t j) { return backend.resolve(base.stops[j].location); };

    for (std::size_t ip = 0; ip <= n; ++ip) {
        if (load[ip] + passengers > vehicle.capacity) continue;
        Location prev_loc = ip == 0 ? anchor.location : stop_loc(ip - 1);
        Time prev_dep = ip == 0 ? anchor.time : dep[ip - 1];
        Time pickup_dep =
            std::max(prev_dep + backend.travel_time_raw(prev_loc, pickup), earliest_pickup);
        if (std::isinf(pickup_dep)) continue;

        // walk dropoff positions, carrying the delayed chain through the
        // stops that would ride between pickup and dropoff
        Location chain_loc = pickup;
        Time chain_dep = pickup_dep;
        int max_load = load[ip];
        for (std::size_t jd = ip; jd <= n; ++jd) {
            if (max_load + passengers <= vehicle.capacity) {
                Time drop_arr = chain_dep + backend.travel_time_raw(chain_loc, dropoff);
                bool ok = leq(drop_arr, latest_dropoff);
                if (ok) {
                    if (jd < n) {
                        Time next_arr = drop_arr + backend.travel_time_raw(dropoff, stop_loc(jd));
                        ok = leq(next_arr, slack.latest_arrival[jd]);
                    } else {
                        Duration back = backend.travel_time_raw(dropoff, vehicle.depot);
                        ok = leq(drop_arr + back, vehicle.shift_end);
                    }
                }
                if (ok) out.push_back({ip, jd});
            }
            if (jd == n) break;
            // stop jd joins the chain between pickup and dropoff
            Time arr = chain_dep + backend.travel_time_raw(chain_loc, stop_loc(jd));
            if (!leq(arr, slack.latest_arrival[jd])) break;
            const auto& s = base.stops[jd];
            Time d = arr;
            if (s.kind == StopKind::pickup)
                d = std::max(d, requests.at(s.request_id).earliest_pickup);
            chain_dep = d;
            chain_loc = stop_loc(jd);
            max_load = std::max(max_load, load[jd + 1]);
        }
    }
    return out;
}

// Materializes one placement: dropoff inserted first so indices refer to the
// original route, then canonical departures are recomputed.
inline void apply_insertion(RoutePlan& plan, const PositionPair& pos, const Request& request,
                            const TravelTimeBackend& backend, const Anchor& anchor,
                            const std::map<RequestId, Request>& requests) {
    Stop ps{request.pickup, 0.0, request.passengers, request.id, StopKind::pickup};
    Stop ds{request.dropoff, 0.0, -request.passengers, request.id, StopKind::dropoff};
    plan.stops.insert(plan.stops.begin() + static_cast<std::ptrdiff_t>(pos.dropoff), ds);
    plan.stops.insert(plan.stops.begin() + static_cast<std::ptrdiff_t>(pos.pickup), ps);
    canonicalize(plan, backend, anchor, requests);
}

// Exhaustive search over all (vehicle, pickup position, dropoff position)
// simple insertions that keep existing stops in order.
inline std::vector<InsertionCandidate> enumerate_insertions(const ServiceState& state,
                                                            const Request& request) {
    std::vector<InsertionCandidate> out;
    const auto& backend = state.backend();
    const auto& requests = state.requests();

    for (std::size_t v = 0; v < state.vehicles().size(); ++v) {
        const auto& vs = state.vehicles()[v];
        const auto& base = state.plans()[v];
        Anchor anchor{state.position(v), state.clock()};
        auto pairs = feasible_insertion_pairs(base, vs.spec, backend, anchor, vs.load, requests,
                                              request.pickup, request.dropoff,
                                              request.passengers, request.earliest_pickup,
                                              request.latest_dropoff);
        for (const auto& pos : pairs) {
            InsertionCandidate cand;
            cand.vehicle_id = vs.spec.id;
            cand.vehicle_index = v;
            cand.pickup_index = pos.pickup;
            cand.dropoff_index = pos.dropoff;
            cand.plan = base;
            apply_insertion(cand.plan, pos, request, backend, anchor, requests);
            out.push_back(std::move(cand));
        }
    }
    return out;
}

enum class AcceptanceMode { always_accept, accept_reject };

struct ConfirmOptions {
    AcceptanceMode mode = AcceptanceMode::accept_reject;
    double gamma = 0.9;
    // The accept/reject comparison may use a different objective than the
    // placement search; null means the placement objective decides both.
    const ValueFunction* acceptance = nullptr;
};

// Prompt confirmation: pick the score-maximizing feasible insertion (ties
// broken by lower vehicle id, then lower pickup and dropoff index) and, in
// accept/reject mode, accept only when the accept action value beats the
// reject action value.
inline Decision confirm(const ServiceState& state, const Request& request,
                        const ValueFunction& value_fn, const ConfirmOptions& opt = {}) {
    auto candidates = enumerate_insertions(state, request);
    if (candidates.empty()) return Decision{Verdict::reject, state.plans()};

    const InsertionCandidate* best = nullptr;
    double best_score = -kInfinity;
    FleetPlans scratch = state.plans();
    for (auto& cand : candidates) {
        scratch[cand.vehicle_index] = cand.plan;
        cand.score = value_fn.evaluate(scratch, state);
        scratch[cand.vehicle_index] = state.plans()[cand.vehicle_index];
        if (cand.score > best_score) {  // strict: first of equals wins the tie
            best_score = cand.score;
            best = &cand;
        }
    }

    FleetPlans post = state.plans();
    post[best->vehicle_index] = best->plan;

    if (opt.mode == AcceptanceMode::accept_reject) {
        const ValueFunction& acc = opt.acceptance ? *opt.acceptance : value_fn;
        double accept_value = opt.acceptance ? acc.evaluate(post, state) : best_score;
        double keep_value = acc.evaluate(state.plans(), state);
        if (1.0 + opt.gamma * accept_value < opt.gamma * keep_value)
            return Decision{Verdict::reject, state.plans()};
    }

    return Decision{Verdict::accept, std::move(post)};
}

}  // namespace dvrp
