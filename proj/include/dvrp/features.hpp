#pragma once

#include <algorithm>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/network.hpp"
#include "dvrp/state.hpp"
#include "dvrp/types.hpp"

namespace dvrp {

enum class FeatureSet {
    idle,                 // x
    temporal,             // x_w
    spatiotemporal,       // x_a
    idle_spatiotemporal,  // x + x_a
};

struct FeatureConfig {
    Duration horizon = 2880.0;  // h: look-ahead span (4 hours at 720 time units per hour)
    Duration window = 6.0;      // w: availability bucket width (30 seconds); h / w = 480
    int grid = 1;                     // g
    int window_multiple = 2;          // N_wm
    int interval_count = 1;           // N_ci
    int min_vehicles = 1;             // N_mv
    FeatureSet feature_set = FeatureSet::idle_spatiotemporal;

    std::size_t interval_total() const {
        return static_cast<std::size_t>(horizon / window + 0.5);
    }

    std::size_t length() const {
        std::size_t spatio = static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid) *
                             static_cast<std::size_t>(interval_count) *
                             static_cast<std::size_t>(min_vehicles);
        switch (feature_set) {
            case FeatureSet::idle: return 1;
            case FeatureSet::temporal: return interval_total();
            case FeatureSet::spatiotemporal: return spatio;
            case FeatureSet::idle_spatiotemporal: return 1 + spatio;
        }
        return 0;
    }
};

namespace detail {

// One idle span of a vehicle: waiting between arriving at the next stop and
// departing from it. Binned at the stop the vehicle most recently departed.
struct IdlePeriod {
    Time begin;
    Time end;
    Location at;
};

// Legs of the complete plan: current position and clock up front, depot at
// shift end appended.
template <typename Fn>
void for_each_leg(const FleetPlans& plans, const ServiceState& state, std::size_t vehicle_index,
                  Fn&& fn) {
    const auto& backend = state.backend();
    const auto& vs = state.vehicles()[vehicle_index];
    Location prev = state.position(vehicle_index);
    Time prev_dep = state.clock();
    for (const auto& stop : plans[vehicle_index].stops) {
        fn(prev, prev_dep, backend.resolve(stop.location), stop.departure);
        prev = backend.resolve(stop.location);
        prev_dep = stop.departure;
    }
    fn(prev, prev_dep, backend.resolve(vs.spec.depot), vs.spec.shift_end);
}

inline std::vector<IdlePeriod> idle_periods(const FleetPlans& plans, const ServiceState& state,
                                            std::size_t vehicle_index) {
    std::vector<IdlePeriod> out;
    const auto& backend = state.backend();
    for_each_leg(plans, state, vehicle_index,
                 [&](const Location& from, Time dep, const Location& to, Time next_dep) {
                     Time arrival = dep + backend.travel_time_raw(from, to);
                     if (next_dep > arrival + kTimeEps)
                         out.push_back({arrival, next_dep, from});
                 });
    return out;
}

}  // namespace detail

// Idle time of one vehicle over the next h time units.
inline double idle_time_vehicle(const FleetPlans& plans, const ServiceState& state,
                                std::size_t vehicle_index, Duration h) {
    const auto& backend = state.backend();
    const Time t = state.clock();
    double total = 0.0;
    detail::for_each_leg(plans, state, vehicle_index,
                         [&](const Location& from, Time dep, const Location& to, Time next_dep) {
                             Duration leg = backend.travel_time_raw(from, to);
                             total += std::max(std::min(next_dep, t + h) - dep - leg, 0.0);
                         });
    return total;
}

// Total fleet idle time over the next h time units (the x feature).
inline double idle_time_feature(const FleetPlans& plans, const ServiceState& state, Duration h) {
    double total = 0.0;
    for (std::size_t v = 0; v < plans.size(); ++v)
        total += idle_time_vehicle(plans, state, v, h);
    return total;
}

// Per-interval idle-vehicle counts (the x_w feature). A vehicle counts for
// interval i only if the whole interval lies inside one of its idle spans.
inline std::vector<int> temporal_from_periods(
    const std::vector<std::vector<detail::IdlePeriod>>& periods, Time t, Duration h, Duration w) {
    const std::size_t n = static_cast<std::size_t>(h / w + 0.5);
    std::vector<int> counts(n, 0);
    for (const auto& vehicle_periods : periods) {
        for (const auto& p : vehicle_periods) {
            // intervals fully contained in [p.begin, p.end)
            double lo = (p.begin - t) / w;
            double hi = (p.end - t) / w;
            long first = static_cast<long>(std::ceil(lo - kTimeEps));
            long last = static_cast<long>(std::floor(hi + kTimeEps)) - 1;
            first = std::max(first, 0L);
            last = std::min(last, static_cast<long>(n) - 1);
            for (long i = first; i <= last; ++i) ++counts[static_cast<std::size_t>(i)];
        }
    }
    return counts;
}

inline std::vector<int> temporal_availability(const FleetPlans& plans, const ServiceState& state,
                                              Duration h, Duration w) {
    std::vector<std::vector<detail::IdlePeriod>> periods(plans.size());
    for (std::size_t v = 0; v < plans.size(); ++v)
        periods[v] = detail::idle_periods(plans, state, v);
    return temporal_from_periods(periods, state.clock(), h, w);
}

// x_a computed from already-extracted idle periods (one list per vehicle);
// lets the optimizer cache per-vehicle periods across iterations.
inline std::vector<int> spatiotemporal_from_periods(
    const std::vector<std::vector<detail::IdlePeriod>>& periods, const TravelTimeBackend& backend,
    Time t, const FeatureConfig& cfg) {
    const std::size_t n = cfg.interval_total();
    const int g = cfg.grid;
    const std::size_t cells = static_cast<std::size_t>(g) * static_cast<std::size_t>(g);

    std::vector<int> cell_counts(cells * n, 0);
    for (const auto& vehicle_periods : periods) {
        for (const auto& p : vehicle_periods) {
            auto [row, col] = spatial_cell(backend, p.at, g);
            std::size_t cell = static_cast<std::size_t>(row - 1) * g + static_cast<std::size_t>(col - 1);
            double lo = (p.begin - t) / cfg.window;
            double hi = (p.end - t) / cfg.window;
            long first = static_cast<long>(std::ceil(lo - kTimeEps));
            long last = static_cast<long>(std::floor(hi + kTimeEps)) - 1;
            first = std::max(first, 0L);
            last = std::min(last, static_cast<long>(n) - 1);
            for (long i = first; i <= last; ++i)
                ++cell_counts[cell * n + static_cast<std::size_t>(i)];
        }
    }

    std::vector<int> out;
    out.reserve(cells * cfg.interval_count * cfg.min_vehicles);
    for (std::size_t cell = 0; cell < cells; ++cell) {
        const int* chi = cell_counts.data() + cell * n;
        for (int nci = 1; nci <= cfg.interval_count; ++nci) {
            const std::size_t kappa = static_cast<std::size_t>(cfg.window_multiple) *
                                      static_cast<std::size_t>(nci);
            // sliding minimum over windows [i - kappa, i) for i in [kappa, n]
            std::vector<int> window_min;
            if (kappa <= n) {
                window_min.reserve(n - kappa + 1);
                for (std::size_t i = kappa; i <= n; ++i) {
                    int m = chi[i - kappa];
                    for (std::size_t j = i - kappa + 1; j < i; ++j) m = std::min(m, chi[j]);
                    window_min.push_back(m);
                }
            }
            for (int nmv = 1; nmv <= cfg.min_vehicles; ++nmv) {
                int count = 0;
                for (int m : window_min)
                    if (m >= nmv) ++count;
                out.push_back(count);
            }
        }
    }
    return out;
}

// Summarized per-cell availability (the x_a feature): for each grid cell and
// each (n_ci, n_mv), the number of sliding windows of kappa = N_wm * n_ci
// intervals whose minimum idle count in that cell is at least n_mv.
inline std::vector<int> spatiotemporal_availability(const FleetPlans& plans,
                                                    const ServiceState& state,
                                                    const FeatureConfig& cfg) {
    std::vector<std::vector<detail::IdlePeriod>> periods(plans.size());
    for (std::size_t v = 0; v < plans.size(); ++v)
        periods[v] = detail::idle_periods(plans, state, v);
    return spatiotemporal_from_periods(periods, state.backend(), state.clock(), cfg);
}

// Full feature vector per the configured feature set.
inline std::vector<double> extract_features(const FleetPlans& plans, const ServiceState& state,
                                            const FeatureConfig& cfg) {
    std::vector<double> out;
    out.reserve(cfg.length());
    if (cfg.feature_set == FeatureSet::idle || cfg.feature_set == FeatureSet::idle_spatiotemporal)
        out.push_back(idle_time_feature(plans, state, cfg.horizon));
    if (cfg.feature_set == FeatureSet::temporal)
        for (int c : temporal_availability(plans, state, cfg.horizon, cfg.window))
            out.push_back(static_cast<double>(c));
    if (cfg.feature_set == FeatureSet::spatiotemporal ||
        cfg.feature_set == FeatureSet::idle_spatiotemporal)
        for (int c : spatiotemporal_availability(plans, state, cfg))
            out.push_back(static_cast<double>(c));
    return out;
}

}  // namespace dvrp
