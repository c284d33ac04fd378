#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/feasibility.hpp"
#include "dvrp/features.hpp"
#include "dvrp/insertion.hpp"
#include "dvrp/state.hpp"
#include "dvrp/types.hpp"
#include "dvrp/valuefn.hpp"

namespace dvrp {

enum class MutationKind { swap_requests, move_request, shift_request, reverse_segment };

inline const char* to_string(MutationKind k) {
    switch (k) {
        case MutationKind::swap_requests: return "swap";
        case MutationKind::move_request: return "move";
        case MutationKind::shift_request: return "shift";
        case MutationKind::reverse_segment: return "reverse";
    }
    return "?";
}

struct AnnealingConfig {
    double initial_temperature = 1.0;
    double cooling = 0.9995;           // geometric, applied every iteration
    double temperature_floor = 1e-3;
    double weights[4] = {1.0, 1.0, 1.0, 1.0};  // swap, move, shift, reverse
    std::uint64_t seed = 1;

    // Budget: iteration cap, optional wall-clock cap, optional external stop
    // signal. Whichever fires first ends the run; clock and flag are polled
    // every 32 iterations.
    std::size_t max_iterations = 10'000;
    double max_millis = 0.0;                 // 0 disables the wall-clock cap
    const std::atomic<bool>* stop = nullptr;

    std::ostream* trace = nullptr;  // per-iteration CSV when set
};

struct OptimizationResult {
    FleetPlans best_plans;
    double best_score = 0.0;
    double initial_score = 0.0;
    std::size_t iterations = 0;
    std::size_t proposed[4] = {0, 0, 0, 0};
    std::size_t accepted[4] = {0, 0, 0, 0};
};

namespace detail {

// Requests whose pickup has not happened yet: both stops sit on one plan and
// can still be repositioned. Onboard passengers (dropoff only) are fixed.
struct MovableRequest {
    std::size_t vehicle;
    std::size_t pickup_index;
    std::size_t dropoff_index;
};

inline std::vector<MovableRequest> movable_requests(const FleetPlans& plans) {
    std::vector<MovableRequest> out;
    for (std::size_t v = 0; v < plans.size(); ++v) {
        const auto& stops = plans[v].stops;
        for (std::size_t i = 0; i < stops.size(); ++i) {
            if (stops[i].kind != StopKind::pickup) continue;
            for (std::size_t j = i + 1; j < stops.size(); ++j) {
                if (stops[j].kind == StopKind::dropoff &&
                    stops[j].request_id == stops[i].request_id) {
                    out.push_back({v, i, j});
                    break;
                }
            }
        }
    }
    return out;
}

// Each mutator edits plans in place and reports the touched vehicle indices;
// an empty result means the draw produced no change (the mutator restores
// the plans itself in that case). Reinsertions only consider positions that
// keep the route feasible, so almost every proposal survives validation.

inline void erase_stop_pair(std::vector<Stop>& stops, std::size_t i, std::size_t j) {
    stops.erase(stops.begin() + static_cast<std::ptrdiff_t>(j));  // j > i
    stops.erase(stops.begin() + static_cast<std::ptrdiff_t>(i));
}

// Inserts a request's stop pair into vehicle v at a uniformly random feasible
// placement; false when the route cannot take the request anywhere.
inline bool insert_random_feasible(FleetPlans& plans, const ServiceState& state, std::size_t v,
                                   const Request& req, Rng& rng) {
    const auto& backend = state.backend();
    const auto& vs = state.vehicles()[v];
    Anchor anchor{state.position(v), state.clock()};
    auto pairs = feasible_insertion_pairs(plans[v], vs.spec, backend, anchor, vs.load,
                                          state.requests(), req.pickup, req.dropoff,
                                          req.passengers, req.earliest_pickup,
                                          req.latest_dropoff);
    if (pairs.empty()) return false;
    apply_insertion(plans[v], pairs[rng.below(pairs.size())], req, backend, anchor,
                    state.requests());
    return true;
}

// Exchanges two not-yet-picked-up requests between their routes, each landing
// at a random feasible placement on the other's route.
inline std::vector<std::size_t> mutate_swap(FleetPlans& plans, const ServiceState& state,
                                            Rng& rng) {
    auto movable = movable_requests(plans);
    if (movable.size() < 2) return {};
    std::size_t a = rng.below(movable.size());
    std::size_t b = rng.below(movable.size() - 1);
    if (b >= a) ++b;
    const auto& ra = movable[a];
    const auto& rb = movable[b];
    const auto& requests = state.requests();
    const Request& req_a = requests.at(plans[ra.vehicle].stops[ra.pickup_index].request_id);
    const Request& req_b = requests.at(plans[rb.vehicle].stops[rb.pickup_index].request_id);

    RoutePlan saved_a = plans[ra.vehicle];
    RoutePlan saved_b = plans[rb.vehicle];
    if (ra.vehicle == rb.vehicle) {
        std::size_t idx[4] = {ra.pickup_index, ra.dropoff_index, rb.pickup_index,
                              rb.dropoff_index};
        std::sort(std::begin(idx), std::end(idx), std::greater<>());
        auto& stops = plans[ra.vehicle].stops;
        for (std::size_t i : idx) stops.erase(stops.begin() + static_cast<std::ptrdiff_t>(i));
    } else {
        erase_stop_pair(plans[ra.vehicle].stops, ra.pickup_index, ra.dropoff_index);
        erase_stop_pair(plans[rb.vehicle].stops, rb.pickup_index, rb.dropoff_index);
    }
    if (!insert_random_feasible(plans, state, ra.vehicle, req_b, rng) ||
        !insert_random_feasible(plans, state, rb.vehicle, req_a, rng)) {
        plans[ra.vehicle] = std::move(saved_a);
        if (rb.vehicle != ra.vehicle) plans[rb.vehicle] = std::move(saved_b);
        return {};
    }
    if (ra.vehicle == rb.vehicle) return {ra.vehicle};
    return {ra.vehicle, rb.vehicle};
}

// Moves a random not-yet-picked-up request onto another route, landing at a
// random feasible placement there.
inline std::vector<std::size_t> mutate_move(FleetPlans& plans, const ServiceState& state,
                                            Rng& rng) {
    auto movable = movable_requests(plans);
    if (movable.empty() || plans.size() < 2) return {};
    auto pick = movable[rng.below(movable.size())];
    std::size_t target = rng.below(plans.size() - 1);
    if (target >= pick.vehicle) ++target;

    const auto& requests = state.requests();
    const Request& req = requests.at(plans[pick.vehicle].stops[pick.pickup_index].request_id);
    RoutePlan saved = plans[pick.vehicle];
    erase_stop_pair(plans[pick.vehicle].stops, pick.pickup_index, pick.dropoff_index);
    if (!insert_random_feasible(plans, state, target, req, rng)) {
        plans[pick.vehicle] = std::move(saved);
        return {};
    }
    return {pick.vehicle, target};
}

// Repositions a not-yet-picked-up request within its own route.
inline std::vector<std::size_t> mutate_shift(FleetPlans& plans, const ServiceState& state,
                                             Rng& rng) {
    auto movable = movable_requests(plans);
    if (movable.empty()) return {};
    auto pick = movable[rng.below(movable.size())];
    const Request& req =
        state.requests().at(plans[pick.vehicle].stops[pick.pickup_index].request_id);
    RoutePlan saved = plans[pick.vehicle];
    erase_stop_pair(plans[pick.vehicle].stops, pick.pickup_index, pick.dropoff_index);
    if (!insert_random_feasible(plans, state, pick.vehicle, req, rng)) {
        plans[pick.vehicle] = std::move(saved);
        return {};
    }
    return {pick.vehicle};
}

inline std::vector<std::size_t> mutate_reverse(FleetPlans& plans, Rng& rng) {
    std::vector<std::size_t> eligible;
    for (std::size_t v = 0; v < plans.size(); ++v)
        if (plans[v].stops.size() >= 2) eligible.push_back(v);
    if (eligible.empty()) return {};
    std::size_t v = eligible[rng.below(eligible.size())];
    auto& stops = plans[v].stops;
    std::size_t a = rng.below(stops.size() - 1);
    std::size_t b = a + 2 + rng.below(stops.size() - a - 1);  // reverse [a, b), length >= 2
    std::reverse(stops.begin() + static_cast<std::ptrdiff_t>(a),
                 stops.begin() + static_cast<std::ptrdiff_t>(b));
    return {v};
}

// Scores a fleet of plans through the value function, recomputing only the
// vehicles a mutation touched. Idle periods per vehicle are the sufficient
// statistic for every feature set.
class IncrementalScorer {
public:
    IncrementalScorer(const ServiceState& state, const ValueFunction& vf)
        : state_(&state), vf_(&vf) {}

    void rebuild(const FleetPlans& plans) {
        periods_.resize(plans.size());
        for (std::size_t v = 0; v < plans.size(); ++v)
            periods_[v] = idle_periods(plans, *state_, v);
    }

    void update(const FleetPlans& plans, const std::vector<std::size_t>& affected) {
        for (std::size_t v : affected) periods_[v] = idle_periods(plans, *state_, v);
    }

    double score() const {
        const FeatureConfig& cfg = vf_->config();
        const Time t = state_->clock();
        std::vector<double> features;
        features.reserve(cfg.length());
        if (cfg.feature_set == FeatureSet::idle ||
            cfg.feature_set == FeatureSet::idle_spatiotemporal) {
            double idle = 0.0;
            for (const auto& vp : periods_)
                for (const auto& p : vp)
                    idle += std::max(std::min(p.end, t + cfg.horizon) - p.begin, 0.0);
            features.push_back(idle);
        }
        if (cfg.feature_set == FeatureSet::temporal)
            for (int c : temporal_from_periods(periods_, t, cfg.horizon, cfg.window))
                features.push_back(static_cast<double>(c));
        if (cfg.feature_set == FeatureSet::spatiotemporal ||
            cfg.feature_set == FeatureSet::idle_spatiotemporal)
            for (int c : spatiotemporal_from_periods(periods_, state_->backend(), t, cfg))
                features.push_back(static_cast<double>(c));
        return vf_->evaluate_features(features);
    }

private:
    const ServiceState* state_;
    const ValueFunction* vf_;
    std::vector<std::vector<IdlePeriod>> periods_;
};

}  // namespace detail

// Simulated annealing over the committed plans: one random mutation per
// iteration, revert on infeasibility, exponential acceptance on the score
// delta (normalized by the initial score's magnitude), geometric cooling.
// The best feasible fleet seen is returned, so any interruption point yields
// a valid answer no worse than the input.
inline OptimizationResult optimize(const FleetPlans& initial, const ServiceState& state,
                                   const ValueFunction& value_fn, const AnnealingConfig& cfg) {
    const auto& backend = state.backend();
    const auto& requests = state.requests();

    FleetPlans current = initial;
    for (std::size_t v = 0; v < current.size(); ++v) {
        Anchor anchor{state.position(v), state.clock()};
        canonicalize(current[v], backend, anchor, requests);
    }
    if (auto verdict = validate_fleet(current, state); !verdict)
        throw ValidationError(std::string("optimize requires feasible input plans: ") +
                              to_string(verdict.kind) + " (" + verdict.detail + ")");

    detail::IncrementalScorer scorer(state, value_fn);
    scorer.rebuild(current);
    double current_score = scorer.score();

    OptimizationResult result;
    result.initial_score = current_score;
    result.best_plans = current;
    result.best_score = current_score;

    double norm = std::abs(current_score);
    if (norm < 1e-12) norm = 1.0;
    double wsum = cfg.weights[0] + cfg.weights[1] + cfg.weights[2] + cfg.weights[3];
    if (wsum <= 0.0) throw ConfigError("mutation weights must sum to a positive value");

    Rng rng(cfg.seed);
    double temperature = cfg.initial_temperature;
    const auto start = std::chrono::steady_clock::now();
    auto out_of_time = [&]() {
        if (cfg.stop && cfg.stop->load(std::memory_order_relaxed)) return true;
        if (cfg.max_millis <= 0.0) return false;
        auto elapsed = std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - start);
        return elapsed.count() >= cfg.max_millis;
    };

    if (cfg.trace)
        *cfg.trace << "iteration,operator,accepted,current_score,best_score,temperature\n";

    FleetPlans backup = current;  // snapshot for byte-identical reverts
    for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
        if (iter % 32 == 0 && out_of_time()) break;
        ++result.iterations;

        double draw = rng.uniform() * wsum;
        int op = 0;
        for (; op < 3; ++op) {
            if (draw < cfg.weights[op]) break;
            draw -= cfg.weights[op];
        }
        ++result.proposed[op];

        std::vector<std::size_t> affected;
        switch (static_cast<MutationKind>(op)) {
            case MutationKind::swap_requests:
                affected = detail::mutate_swap(current, state, rng);
                break;
            case MutationKind::move_request:
                affected = detail::mutate_move(current, state, rng);
                break;
            case MutationKind::shift_request:
                affected = detail::mutate_shift(current, state, rng);
                break;
            case MutationKind::reverse_segment:
                affected = detail::mutate_reverse(current, rng);
                break;
        }

        bool accepted = false;
        bool scorer_dirty = false;
        if (!affected.empty()) {
            // canonicalize and check only the touched plans
            bool feasible = true;
            for (std::size_t v : affected) {
                Anchor anchor{state.position(v), state.clock()};
                canonicalize(current[v], backend, anchor, requests);
                const auto& vs = state.vehicles()[v];
                auto verdict = validate_plan(current[v], vs.spec, backend, anchor, vs.load,
                                             requests, &vs.onboard);
                if (!verdict) {
                    feasible = false;
                    break;
                }
            }
            if (feasible) {
                scorer.update(current, affected);
                scorer_dirty = true;
                double candidate_score = scorer.score();
                double delta = candidate_score - current_score;
                if (delta >= 0.0 ||
                    rng.uniform() < std::exp(delta / (norm * temperature))) {
                    accepted = true;
                    current_score = candidate_score;
                    ++result.accepted[op];
                    if (candidate_score > result.best_score) {
                        result.best_score = candidate_score;
                        result.best_plans = current;
                    }
                }
            }
            if (accepted) {
                for (std::size_t v : affected) backup[v] = current[v];
            } else {
                for (std::size_t v : affected) current[v] = backup[v];
                if (scorer_dirty) scorer.update(current, affected);
            }
        }

        if (cfg.trace)
            *cfg.trace << iter << ',' << to_string(static_cast<MutationKind>(op)) << ','
                       << (accepted ? 1 : 0) << ',' << current_score << ','
                       << result.best_score << ',' << temperature << '\n';

        temperature = std::max(temperature * cfg.cooling, cfg.temperature_floor);
    }
    return result;
}

}  // namespace dvrp
