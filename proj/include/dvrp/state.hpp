#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/network.hpp"
#include "dvrp/types.hpp"

namespace dvrp {

struct VehicleState {
    Vehicle spec;
    Location anchor;       // last departed stop (or depot); position is derived
    Time anchor_time = 0;  // departure time from the anchor
    int load = 0;
    std::set<RequestId> onboard;
};

// Mutable simulation state. Single-writer: only the simulator calls the
// mutating operations; the optimizer works on plan copies.
class ServiceState {
public:
    ServiceState(const TravelTimeBackend& backend, std::vector<Vehicle> vehicles)
        : backend_(&backend) {
        for (const auto& v : vehicles) {
            VehicleState vs;
            vs.spec = v;
            vs.anchor = backend.resolve(v.depot);
            vs.anchor_time = v.shift_start;
            vehicles_.push_back(vs);
            plans_.push_back(RoutePlan{v.id, {}});
            assigned_count_[v.id] = 0;
        }
        if (!vehicles_.empty()) clock_ = vehicles_.front().spec.shift_start;
    }

    const TravelTimeBackend& backend() const { return *backend_; }
    Time clock() const { return clock_; }
    const std::vector<VehicleState>& vehicles() const { return vehicles_; }
    const FleetPlans& plans() const { return plans_; }
    const std::map<RequestId, Request>& requests() const { return requests_; }
    const std::set<RequestId>& pending() const { return pending_; }
    const std::set<RequestId>& completed() const { return completed_; }
    const std::set<RequestId>& rejected() const { return rejected_; }
    std::size_t missed_window_count() const { return missed_windows_; }

    const Request& request(RequestId id) const { return requests_.at(id); }

    bool is_onboard(RequestId id) const {
        for (const auto& v : vehicles_)
            if (v.onboard.count(id)) return true;
        return false;
    }

    // Current position of a vehicle: interpolated along the active leg for
    // the euclidean backend, snapped to the last departed stop for graphs.
    // Vehicles wait at their anchor and leave as late as the next departure
    // allows, which keeps them where the slack is instead of parked at the
    // next stop.
    Location position(std::size_t vehicle_index) const {
        const auto& vs = vehicles_[vehicle_index];
        const auto& plan = plans_[vehicle_index];
        if (plan.stops.empty()) return vs.anchor;
        Location target = backend_->resolve(plan.stops.front().location);
        if (backend_->kind() == TravelTimeBackend::Kind::graph) return vs.anchor;
        Duration leg = backend_->travel_time_raw(vs.anchor, target);
        Time depart = std::max(vs.anchor_time, plan.stops.front().departure - leg);
        if (clock_ <= depart) return vs.anchor;
        if (leg <= 0.0 || clock_ >= depart + leg) return target;
        double f = (clock_ - depart) / leg;
        return planar(vs.anchor.x + f * (target.x - vs.anchor.x),
                      vs.anchor.y + f * (target.y - vs.anchor.y));
    }

    // Executes all stops with departure <= until and moves the clock.
    void advance_clock(Time until) {
        if (until < clock_ - kTimeEps)
            throw IntegrityError("advance_clock cannot move time backwards");
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            auto& vs = vehicles_[i];
            auto& plan = plans_[i];
            while (!plan.stops.empty() && leq(plan.stops.front().departure, until)) {
                execute_stop(i, plan.stops.front());
                plan.stops.erase(plan.stops.begin());
            }
        }
        clock_ = std::max(clock_, until);
    }

    // Registers an arrived request (not yet accepted or rejected).
    void observe_request(const Request& r) {
        if (r.arrival_time > r.earliest_pickup + kTimeEps)
            throw ValidationError("request arrives after its earliest pickup time");
        if (r.passengers < 1) throw ValidationError("request must carry >= 1 passenger");
        requests_[r.id] = r;
    }

    // Installs the epoch's decision: new plans, and the pending request is
    // moved to the accepted or rejected set.
    void apply_decision(RequestId id, const Decision& d) {
        install_plans(d.post_plans);
        if (d.verdict == Verdict::accept)
            pending_.insert(id);
        else
            rejected_.insert(id);
    }

    // Replaces the fleet's plans (e.g., with an optimizer result) and
    // re-anchors every vehicle at its current position.
    void install_plans(const FleetPlans& plans) {
        if (plans.size() != vehicles_.size())
            throw IntegrityError("plan set size does not match fleet size");
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            Location pos = position(i);
            vehicles_[i].anchor = pos;
            vehicles_[i].anchor_time = clock_;
        }
        plans_ = plans;
    }

    std::size_t arrived_count() const { return requests_.size(); }
    std::size_t accepted_count() const {
        return pending_.size() + onboard_count() + completed_.size();
    }
    std::size_t onboard_count() const {
        std::size_t n = 0;
        for (const auto& v : vehicles_) n += v.onboard.size();
        return n;
    }

    // Per-vehicle counts of requests ever assigned: completed and onboard
    // requests count for the vehicle that served them, pending requests for
    // the vehicle currently holding their pickup stop.
    std::vector<std::size_t> assignment_counts() const {
        std::vector<std::size_t> counts(vehicles_.size(), 0);
        for (std::size_t i = 0; i < vehicles_.size(); ++i) {
            counts[i] = assigned_count_.at(vehicles_[i].spec.id) + vehicles_[i].onboard.size();
            for (const auto& s : plans_[i].stops)
                if (s.kind == StopKind::pickup) ++counts[i];
        }
        return counts;
    }

private:
    void execute_stop(std::size_t vehicle_index, const Stop& stop) {
        auto& vs = vehicles_[vehicle_index];
        Location loc = backend_->resolve(stop.location);
        Time arrival = vs.anchor_time + backend_->travel_time_raw(vs.anchor, loc);
        const Request& r = requests_.at(stop.request_id);
        if (stop.kind == StopKind::pickup) {
            if (!pending_.count(stop.request_id))
                throw IntegrityError("pickup of a request that is not pending");
            pending_.erase(stop.request_id);
            vs.onboard.insert(stop.request_id);
            vs.load += stop.delta;
            if (vs.load > vs.spec.capacity)
                throw IntegrityError("capacity exceeded while executing plan");
        } else {
            if (!vs.onboard.count(stop.request_id))
                throw IntegrityError("dropoff of a request that is not onboard this vehicle");
            vs.onboard.erase(stop.request_id);
            vs.load += stop.delta;
            if (vs.load < 0) throw IntegrityError("negative load while executing plan");
            completed_.insert(stop.request_id);
            assigned_count_[vs.spec.id] += 1;
            if (arrival > r.latest_dropoff + kTimeEps || stop.departure > r.latest_dropoff + kTimeEps)
                ++missed_windows_;
        }
        vs.anchor = loc;
        vs.anchor_time = stop.departure;
    }

    const TravelTimeBackend* backend_;
    Time clock_ = 0.0;
    std::vector<VehicleState> vehicles_;
    FleetPlans plans_;
    std::map<RequestId, Request> requests_;
    std::set<RequestId> pending_;    // accepted, not yet picked up
    std::set<RequestId> completed_;  // accepted, dropped off
    std::set<RequestId> rejected_;
    std::map<VehicleId, std::size_t> assigned_count_;  // completed per vehicle
    std::size_t missed_windows_ = 0;
};

// Population standard deviation of per-vehicle assigned-request counts.
inline double fairness_stddev(const ServiceState& state) {
    auto counts = state.assignment_counts();
    if (counts.empty()) return 0.0;
    double mean = 0.0;
    for (auto c : counts) mean += static_cast<double>(c);
    mean /= static_cast<double>(counts.size());
    double var = 0.0;
    for (auto c : counts) {
        double d = static_cast<double>(c) - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(counts.size()));
}

}  // namespace dvrp
