#include <catch_amalgamated.hpp>

#include <map>
#include <vector>

#include "dvrp/feasibility.hpp"
#include "dvrp/insertion.hpp"

using namespace dvrp;

namespace {

Request make_request(RequestId id, Location pickup, Location dropoff, Time earliest,
                     Time latest, int passengers = 1) {
    Request r;
    r.id = id;
    r.pickup = pickup;
    r.dropoff = dropoff;
    r.arrival_time = 0.0;
    r.earliest_pickup = earliest;
    r.latest_dropoff = latest;
    r.passengers = passengers;
    return r;
}

// random feasible single-vehicle instance built by repeated feasible insertion
struct Instance {
    RoutePlan plan;
    Vehicle vehicle;
    std::map<RequestId, Request> requests;
    Anchor anchor;
};

Instance random_instance(Rng& rng, const TravelTimeBackend& backend, int request_count) {
    Instance inst;
    inst.vehicle = Vehicle{0, 4, 0.0, 1e6, planar(50, 50)};
    inst.anchor = Anchor{planar(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)), 0.0};
    inst.plan.vehicle_id = 0;
    for (RequestId id = 1; id <= request_count; ++id) {
        Location p = planar(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0));
        Location d = planar(rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0));
        Time earliest = rng.uniform(0.0, 200.0);
        Duration direct = backend.travel_time_raw(p, d);
        Request r = make_request(id, p, d, earliest,
                                 earliest + 2.0 * direct + rng.uniform(20.0, 120.0));
        inst.requests[id] = r;
        auto pairs = feasible_insertion_pairs(inst.plan, inst.vehicle, backend, inst.anchor, 0,
                                              inst.requests, r.pickup, r.dropoff, r.passengers,
                                              r.earliest_pickup, r.latest_dropoff);
        if (pairs.empty()) {
            inst.requests.erase(id);
            continue;
        }
        apply_insertion(inst.plan, pairs[rng.below(pairs.size())], r, backend, inst.anchor,
                        inst.requests);
    }
    return inst;
}

}  // namespace

TEST_CASE("canonicalize assigns earliest departures and waits for pickups") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    std::map<RequestId, Request> requests;
    requests[1] = make_request(1, planar(10, 0), planar(30, 0), 50.0, 500.0);
    RoutePlan plan{0,
                   {Stop{requests[1].pickup, 0, 1, 1, StopKind::pickup},
                    Stop{requests[1].dropoff, 0, -1, 1, StopKind::dropoff}}};
    canonicalize(plan, backend, Anchor{planar(0, 0), 0.0}, requests);
    CHECK(plan.stops[0].departure == Catch::Approx(50.0));  // arrive 10, wait for earliest
    CHECK(plan.stops[1].departure == Catch::Approx(70.0));
}

TEST_CASE("validate_plan reports each violation kind") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    Vehicle veh{0, 2, 0.0, 1000.0, planar(0, 0)};
    std::map<RequestId, Request> requests;
    requests[1] = make_request(1, planar(10, 0), planar(20, 0), 0.0, 200.0);
    requests[2] = make_request(2, planar(15, 0), planar(25, 0), 0.0, 200.0, 2);
    Anchor anchor{planar(0, 0), 0.0};

    auto pickup = [&](RequestId id, Time dep) {
        return Stop{requests[id].pickup, dep, requests[id].passengers, id, StopKind::pickup};
    };
    auto dropoff = [&](RequestId id, Time dep) {
        return Stop{requests[id].dropoff, dep, -requests[id].passengers, id, StopKind::dropoff};
    };

    SECTION("feasible plan passes") {
        RoutePlan plan{0, {pickup(1, 10), dropoff(1, 20)}};
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).feasible());
    }
    SECTION("pickup without dropoff") {
        RoutePlan plan{0, {pickup(1, 10)}};
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).kind ==
              ViolationKind::pairing);
    }
    SECTION("dropoff before pickup of a request that is not onboard") {
        RoutePlan plan{0, {dropoff(1, 20), pickup(1, 30)}};
        std::set<RequestId> onboard;  // empty: request 1 is not in the vehicle
        auto verdict = validate_plan(plan, veh, backend, anchor, 0, requests, &onboard);
        CHECK_FALSE(verdict.feasible());
    }
    SECTION("unreachable departure") {
        RoutePlan plan{0, {pickup(1, 5), dropoff(1, 20)}};  // 10 units away, departs at 5
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).kind ==
              ViolationKind::travel_time);
    }
    SECTION("non-decreasing departures") {
        RoutePlan plan{0, {pickup(1, 30), dropoff(1, 20)}};
        auto verdict = validate_plan(plan, veh, backend, anchor, 0, requests);
        CHECK_FALSE(verdict.feasible());
    }
    SECTION("pickup before its earliest time") {
        requests[1].earliest_pickup = 50.0;
        RoutePlan plan{0, {pickup(1, 10), dropoff(1, 60)}};
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).kind ==
              ViolationKind::window);
    }
    SECTION("dropoff after its deadline") {
        RoutePlan plan{0, {pickup(1, 250), dropoff(1, 260)}};
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).kind ==
              ViolationKind::window);
    }
    SECTION("capacity exceeded") {
        RoutePlan plan{0, {pickup(1, 10), pickup(2, 15), dropoff(2, 25), dropoff(1, 30)}};
        CHECK(validate_plan(plan, veh, backend, anchor, 0, requests).kind ==
              ViolationKind::capacity);
    }
    SECTION("cannot return to the depot by shift end") {
        Vehicle tight = veh;
        tight.shift_end = 25.0;  // dropoff at 20 plus 20 back to the depot
        RoutePlan plan{0, {pickup(1, 10), dropoff(1, 20)}};
        CHECK(validate_plan(plan, tight, backend, anchor, 0, requests).kind ==
              ViolationKind::shift_end);
    }
}

TEST_CASE("validate_plan agrees with a step-by-step replay on random plans") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        auto inst = random_instance(rng, backend, 4);
        auto verdict =
            validate_plan(inst.plan, inst.vehicle, backend, inst.anchor, 0, inst.requests);
        REQUIRE(verdict.feasible());

        // independent replay: walk the schedule stop by stop
        Location prev = inst.anchor.location;
        Time prev_dep = inst.anchor.time;
        int load = 0;
        bool ok = true;
        for (const auto& s : inst.plan.stops) {
            Time arrival = prev_dep + backend.travel_time_raw(prev, s.location);
            if (arrival > s.departure + kTimeEps) ok = false;
            const Request& r = inst.requests.at(s.request_id);
            if (s.kind == StopKind::pickup && s.departure + kTimeEps < r.earliest_pickup)
                ok = false;
            if (s.kind == StopKind::dropoff && arrival > r.latest_dropoff + kTimeEps) ok = false;
            load += s.delta;
            if (load < 0 || load > inst.vehicle.capacity) ok = false;
            prev = s.location;
            prev_dep = s.departure;
        }
        CHECK(ok);
    }
}

TEST_CASE("slack bounds are tight: delaying within slack stays feasible, beyond breaks") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    Rng rng(123);
    const double eps = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto inst = random_instance(rng, backend, 3);
        if (inst.plan.stops.empty()) continue;
        auto slack = compute_slack(inst.plan, inst.vehicle, backend, inst.anchor, inst.requests);

        for (std::size_t j = 0; j < inst.plan.stops.size(); ++j) {
            // push stop j to its latest arrival and ripple the delay forward
            auto delayed = [&](double arrival_j) {
                RoutePlan p = inst.plan;
                Time dep = arrival_j;
                if (p.stops[j].kind == StopKind::pickup)
                    dep = std::max(dep, inst.requests.at(p.stops[j].request_id).earliest_pickup);
                p.stops[j].departure = std::max(p.stops[j].departure, dep);
                for (std::size_t k = j + 1; k < p.stops.size(); ++k) {
                    Time arr = p.stops[k - 1].departure +
                               backend.travel_time_raw(p.stops[k - 1].location,
                                                       p.stops[k].location);
                    p.stops[k].departure = std::max(p.stops[k].departure, arr);
                }
                return validate_plan(p, inst.vehicle, backend, inst.anchor, 0, inst.requests)
                    .feasible();
            };
            CHECK(delayed(slack.latest_arrival[j] - eps));
            if (slack.slack[j] < 1e5) {  // skip effectively unbounded stops
                CHECK_FALSE(delayed(slack.latest_arrival[j] + 1.0));
                ++checked;
            }
        }
    }
    CHECK(checked > 50);  // the property must actually bite on most instances
}

TEST_CASE("compute_slack rejects infeasible schedules") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    Vehicle veh{0, 2, 0.0, 1000.0, planar(0, 0)};
    std::map<RequestId, Request> requests;
    requests[1] = make_request(1, planar(10, 0), planar(90, 0), 0.0, 50.0);  // ride takes 80
    RoutePlan plan{0,
                   {Stop{requests[1].pickup, 10, 1, 1, StopKind::pickup},
                    Stop{requests[1].dropoff, 90, -1, 1, StopKind::dropoff}}};
    CHECK_THROWS_AS(compute_slack(plan, veh, backend, Anchor{planar(0, 0), 0.0}, requests),
                    ValidationError);
}

TEST_CASE("fleet validation checks coverage of pending and onboard requests") {
    auto backend = TravelTimeBackend::euclidean({0, 0, 100, 100});
    std::vector<Vehicle> fleet{Vehicle{0, 4, 0.0, 1e6, planar(0, 0)},
                               Vehicle{1, 4, 0.0, 1e6, planar(0, 0)}};
    ServiceState state(backend, fleet);
    Request r = make_request(1, planar(10, 0), planar(20, 0), 0.0, 1000.0);
    state.observe_request(r);
    FleetPlans plans = state.plans();
    plans[0].stops = {Stop{r.pickup, 10, 1, 1, StopKind::pickup},
                      Stop{r.dropoff, 20, -1, 1, StopKind::dropoff}};
    state.apply_decision(r.id, Decision{Verdict::accept, plans});

    CHECK(validate_fleet(state.plans(), state).feasible());

    SECTION("a pending request must appear on exactly one plan") {
        FleetPlans missing = state.plans();
        missing[0].stops.clear();
        CHECK(validate_fleet(missing, state).kind == ViolationKind::coverage);

        FleetPlans doubled = state.plans();
        doubled[1].stops = doubled[0].stops;
        CHECK_FALSE(validate_fleet(doubled, state).feasible());
    }
    SECTION("plans must not contain stops for unaccepted requests") {
        FleetPlans extra = state.plans();
        extra[1].stops = {Stop{planar(5, 5), 10, 1, 77, StopKind::pickup},
                          Stop{planar(6, 6), 20, -1, 77, StopKind::dropoff}};
        CHECK_FALSE(validate_fleet(extra, state).feasible());
    }
    SECTION("an onboard request's dropoff must stay on its vehicle") {
        state.advance_clock(10.0);  // pickup executes, request 1 is onboard vehicle 0
        REQUIRE(state.vehicles()[0].onboard.count(1) == 1);
        FleetPlans moved = state.plans();
        moved[1].stops = moved[0].stops;  // dropoff hops to the other vehicle
        moved[0].stops.clear();
        CHECK_FALSE(validate_fleet(moved, state).feasible());
    }
}
