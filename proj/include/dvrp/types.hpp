#pragma once

#include <cstdint>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/network.hpp"

namespace dvrp {

using RequestId = std::int64_t;
using VehicleId = std::int32_t;

struct Request {
    RequestId id = 0;
    Location pickup;
    Location dropoff;
    Time earliest_pickup = 0.0;
    Time latest_dropoff = 0.0;
    Time arrival_time = 0.0;
    int passengers = 1;
};

struct Vehicle {
    VehicleId id = 0;
    int capacity = 1;
    Time shift_start = 0.0;
    Time shift_end = 0.0;
    Location depot;
};

enum class StopKind { pickup, dropoff };

struct Stop {
    Location location;
    Time departure = 0.0;
    int delta = 0;  // +passengers on pickup, -passengers on dropoff
    RequestId request_id = 0;
    StopKind kind = StopKind::pickup;

    friend bool operator==(const Stop& a, const Stop& b) {
        return a.location == b.location && a.departure == b.departure && a.delta == b.delta &&
               a.request_id == b.request_id && a.kind == b.kind;
    }
};

struct RoutePlan {
    VehicleId vehicle_id = 0;
    std::vector<Stop> stops;

    friend bool operator==(const RoutePlan& a, const RoutePlan& b) {
        return a.vehicle_id == b.vehicle_id && a.stops == b.stops;
    }
};

using FleetPlans = std::vector<RoutePlan>;  // one plan per vehicle, indexed by vehicle

enum class Verdict { accept, reject };

struct Decision {
    Verdict verdict = Verdict::reject;
    FleetPlans post_plans;
};

struct Experience {
    std::vector<double> features;       // post-decision feature vector at t
    double reward = 0.0;                // 1 iff the epoch accepted
    std::vector<double> next_features;  // best post-decision features at t'
    bool terminal = false;
    double target = 0.0;  // Monte Carlo target, filled by experience collection
};

}  // namespace dvrp
