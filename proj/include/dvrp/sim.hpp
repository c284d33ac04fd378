#pragma once

#include <algorithm>
#include <chrono>
#include <ostream>
#include <string>
#include <vector>

#include "dvrp/anytime.hpp"
#include "dvrp/common.hpp"
#include "dvrp/feasibility.hpp"
#include "dvrp/insertion.hpp"
#include "dvrp/scenario.hpp"
#include "dvrp/state.hpp"
#include "dvrp/types.hpp"
#include "dvrp/valuefn.hpp"

namespace dvrp {

// The six policy combinations of the ablation grid: which objective places
// insertions, whether requests can be rejected, and which objective drives
// the between-arrival optimization.
enum class AblationSetting { a, b, c, d, e, our };

inline const char* to_string(AblationSetting s) {
    switch (s) {
        case AblationSetting::a: return "A";
        case AblationSetting::b: return "B";
        case AblationSetting::c: return "C";
        case AblationSetting::d: return "D";
        case AblationSetting::e: return "E";
        case AblationSetting::our: return "Our";
    }
    return "?";
}

inline AblationSetting parse_setting(const std::string& s) {
    if (s == "A" || s == "a") return AblationSetting::a;
    if (s == "B" || s == "b") return AblationSetting::b;
    if (s == "C" || s == "c") return AblationSetting::c;
    if (s == "D" || s == "d") return AblationSetting::d;
    if (s == "E" || s == "e") return AblationSetting::e;
    if (s == "Our" || s == "our" || s == "OUR") return AblationSetting::our;
    throw ConfigError("unknown setting: " + s + " (expected A, B, C, D, E, or Our)");
}

struct PolicyWiring {
    const ValueFunction* insertion_value = nullptr;   // placement objective
    const ValueFunction* acceptance_value = nullptr;  // null: same as placement
    AcceptanceMode acceptance_mode = AcceptanceMode::always_accept;
    const ValueFunction* anytime_value = nullptr;
    double gamma = 0.9;
};

// Grid row -> concrete wiring over a heuristic and a learned objective.
inline PolicyWiring make_wiring(AblationSetting s, const ValueFunction& heuristic,
                                const ValueFunction& learned, double gamma = 0.9) {
    PolicyWiring w;
    w.gamma = gamma;
    switch (s) {
        case AblationSetting::a:
            w.insertion_value = &heuristic;
            w.acceptance_mode = AcceptanceMode::always_accept;
            w.anytime_value = &heuristic;
            break;
        case AblationSetting::b:
            w.insertion_value = &heuristic;
            w.acceptance_value = &learned;
            w.acceptance_mode = AcceptanceMode::accept_reject;
            w.anytime_value = &learned;
            break;
        case AblationSetting::c:
            w.insertion_value = &learned;
            w.acceptance_mode = AcceptanceMode::always_accept;
            w.anytime_value = &heuristic;
            break;
        case AblationSetting::d:
            w.insertion_value = &learned;
            w.acceptance_mode = AcceptanceMode::accept_reject;
            w.anytime_value = &heuristic;
            break;
        case AblationSetting::e:
            w.insertion_value = &learned;
            w.acceptance_mode = AcceptanceMode::always_accept;
            w.anytime_value = &learned;
            break;
        case AblationSetting::our:
            w.insertion_value = &learned;
            w.acceptance_mode = AcceptanceMode::accept_reject;
            w.anytime_value = &learned;
            break;
    }
    return w;
}

// How the simulated gap until the next arrival becomes a compute budget.
// Scaled mode keeps runs deterministic and faster than real time; realtime
// mode spends the actual wall-clock gap (for latency experiments).
struct GapBudget {
    enum class Mode { scaled, fixed, realtime };
    Mode mode = Mode::scaled;
    double iterations_per_second = 100.0;  // scaled: budget = gap * this
    std::size_t fixed_iterations = 0;      // fixed: same budget every gap
    std::size_t iteration_cap = 200'000;   // hard ceiling in any mode

    std::size_t iterations_for(Duration gap) const {
        if (mode == Mode::fixed) return std::min(fixed_iterations, iteration_cap);
        if (mode == Mode::realtime) return iteration_cap;
        double it = std::max(gap, 0.0) * iterations_per_second;
        if (it >= static_cast<double>(iteration_cap)) return iteration_cap;
        return static_cast<std::size_t>(it);
    }
};

struct EpisodeOptions {
    AnnealingConfig annealing;  // budget fields are overwritten per gap
    GapBudget budget;
    std::uint64_t seed = 1;  // stream source for the per-gap optimizer seeds
    const FeatureConfig* record_config = nullptr;  // feature layout for recorded experiences
    std::ostream* trace = nullptr;                 // per-epoch CSV
};

struct EpisodeReport {
    std::size_t arrived = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    double service_rate = 0.0;
    double rejection_rate = 0.0;
    double latency_ms_mean = 0.0;
    double latency_ms_p50 = 0.0;
    double latency_ms_p95 = 0.0;
    double mean_iterations_per_gap = 0.0;
    double fairness_std = 0.0;
    std::size_t completed = 0;
    std::size_t missed_windows = 0;
    std::size_t validation_failures = 0;  // optimizer outputs rejected pre-install
};

namespace detail {

inline double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double rank = p * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(rank);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

}  // namespace detail

// One episode: per arrival, advance the world, confirm the request, record
// the post-decision experience, then optimize plans until the next arrival
// and install the result. Afterwards the clock runs out so every accepted
// request completes; a missed window there is a hard bug.
inline EpisodeReport run_episode(const TravelTimeBackend& backend,
                                 const std::vector<Vehicle>& vehicles,
                                 const std::vector<Request>& requests, Duration episode_length,
                                 const PolicyWiring& wiring, const EpisodeOptions& opt,
                                 std::vector<Experience>* recorder = nullptr) {
    if (!wiring.insertion_value || !wiring.anytime_value)
        throw ConfigError("policy wiring is incomplete");

    ServiceState state(backend, vehicles);
    const std::size_t record_start = recorder ? recorder->size() : 0;
    std::vector<double> latencies_ms;
    latencies_ms.reserve(requests.size());
    double total_iterations = 0.0;
    std::size_t gaps = 0;
    EpisodeReport report;

    ConfirmOptions confirm_opt;
    confirm_opt.mode = wiring.acceptance_mode;
    confirm_opt.gamma = wiring.gamma;
    confirm_opt.acceptance = wiring.acceptance_value;

    if (opt.trace)
        *opt.trace << "epoch,clock,request_id,verdict,latency_ms,gap,iterations,best_score\n";

    for (std::size_t k = 0; k < requests.size(); ++k) {
        const Request& r = requests[k];
        state.advance_clock(r.arrival_time);
        state.observe_request(r);

        auto t0 = std::chrono::steady_clock::now();
        Decision decision = confirm(state, r, *wiring.insertion_value, confirm_opt);
        auto t1 = std::chrono::steady_clock::now();
        latencies_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        state.apply_decision(r.id, decision);
        bool accepted = decision.verdict == Verdict::accept;

        if (recorder && opt.record_config) {
            Experience e;
            e.features = extract_features(state.plans(), state, *opt.record_config);
            e.reward = accepted ? 1.0 : 0.0;
            e.terminal = k + 1 == requests.size();
            recorder->push_back(std::move(e));
        }

        Duration gap =
            (k + 1 < requests.size() ? requests[k + 1].arrival_time : episode_length) -
            state.clock();
        std::size_t budget = opt.budget.iterations_for(gap);
        std::size_t iterations = 0;
        double best_score = 0.0;
        if (budget > 0 && validate_fleet(state.plans(), state)) {
            AnnealingConfig acfg = opt.annealing;
            acfg.max_iterations = budget;
            acfg.seed = split_seed(opt.seed, k + 1);
            if (opt.budget.mode == GapBudget::Mode::realtime)
                acfg.max_millis = std::max(gap, 0.0) * 1000.0;
            auto result = optimize(state.plans(), state, *wiring.anytime_value, acfg);
            iterations = result.iterations;
            best_score = result.best_score;
            if (validate_fleet(result.best_plans, state)) {
                state.install_plans(result.best_plans);
            } else {
                // optimize guarantees feasible output; reaching this is a bug
                ++report.validation_failures;
                throw IntegrityError("optimizer produced an infeasible plan set");
            }
        }
        total_iterations += static_cast<double>(iterations);
        ++gaps;

        if (opt.trace)
            *opt.trace << k << ',' << detail::format_double(state.clock()) << ',' << r.id << ','
                       << (accepted ? "accept" : "reject") << ','
                       << detail::format_double(latencies_ms.back()) << ',' << detail::format_double(gap)
                       << ',' << iterations << ',' << detail::format_double(best_score) << '\n';
    }

    // drain: run the clock to the end of every shift so all committed stops
    // execute; state bookkeeping traps any window or pairing violation
    Time horizon = episode_length;
    for (const auto& v : vehicles) horizon = std::max(horizon, v.shift_end);
    state.advance_clock(horizon);
    if (state.pending().size() + state.onboard_count() != 0)
        throw IntegrityError("accepted requests left unserved after episode drain");

    // fill in next-epoch features for the recorded experiences
    if (recorder && opt.record_config) {
        std::size_t dim = opt.record_config->length();
        for (std::size_t i = record_start; i < recorder->size(); ++i) {
            auto& e = (*recorder)[i];
            if (!e.terminal && i + 1 < recorder->size())
                e.next_features = (*recorder)[i + 1].features;
            else
                e.next_features.assign(dim, 0.0);
        }
    }

    report.arrived = state.arrived_count();
    report.accepted = state.accepted_count();
    report.rejected = state.rejected().size();
    report.completed = state.completed().size();
    report.missed_windows = state.missed_window_count();
    if (report.arrived > 0) {
        report.service_rate =
            static_cast<double>(report.accepted) / static_cast<double>(report.arrived);
        report.rejection_rate =
            static_cast<double>(report.rejected) / static_cast<double>(report.arrived);
    }
    if (!latencies_ms.empty()) {
        double sum = 0.0;
        for (double x : latencies_ms) sum += x;
        report.latency_ms_mean = sum / static_cast<double>(latencies_ms.size());
        report.latency_ms_p50 = detail::percentile(latencies_ms, 0.50);
        report.latency_ms_p95 = detail::percentile(latencies_ms, 0.95);
    }
    if (gaps > 0) report.mean_iterations_per_gap = total_iterations / static_cast<double>(gaps);
    report.fairness_std = fairness_stddev(state);
    return report;
}

// Simulates episodes under the given wiring and labels each epoch's features
// with the discounted sum of the next k rewards (tail-padded with zeros).
inline ExperienceBuffer collect_experiences(const ScenarioConfig& cfg,
                                            const TravelTimeBackend& backend,
                                            const PolicyWiring& wiring,
                                            const FeatureConfig& feature_cfg,
                                            std::size_t episodes, std::size_t k, double gamma,
                                            std::uint64_t seed, const EpisodeOptions& base_opt,
                                            std::size_t buffer_capacity = 1'000'000) {
    ExperienceBuffer buffer(buffer_capacity);
    auto vehicles = make_vehicles(cfg);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::uint64_t ep_seed = split_seed(seed, ep + 1);
        auto requests = generate_requests(cfg, backend, ep_seed);
        EpisodeOptions opt = base_opt;
        opt.seed = split_seed(ep_seed, 0xA11);
        opt.record_config = &feature_cfg;
        std::vector<Experience> epoch_log;
        run_episode(backend, vehicles, requests, cfg.episode_length, wiring, opt, &epoch_log);
        for (std::size_t i = 0; i < epoch_log.size(); ++i) {
            std::vector<double> rewards;
            rewards.reserve(k);
            // the label is the discounted sum of the k rewards after this
            // epoch; the epoch's own reward is part of the action value, not
            // of the post-decision state value
            for (std::size_t j = i + 1; j < i + 1 + k; ++j)
                rewards.push_back(j < epoch_log.size() ? epoch_log[j].reward : 0.0);
            epoch_log[i].target = mc_target(rewards, gamma);
            buffer.push(std::move(epoch_log[i]));
        }
    }
    return buffer;
}

struct MatrixRow {
    std::string setting;  // grid row name or a free-form wiring label
    std::uint64_t seed = 0;
    EpisodeReport report;
};

// Runs every setting on the same seed-matched request sequences.
inline std::vector<MatrixRow> evaluate_matrix(const ScenarioConfig& cfg,
                                              const TravelTimeBackend& backend,
                                              const std::vector<AblationSetting>& settings,
                                              const std::vector<std::uint64_t>& seeds,
                                              const ValueFunction& heuristic,
                                              const ValueFunction& learned,
                                              const EpisodeOptions& base_opt,
                                              double gamma = 0.9) {
    std::vector<MatrixRow> rows;
    auto vehicles = make_vehicles(cfg);
    for (auto seed : seeds) {
        auto requests = generate_requests(cfg, backend, seed);
        for (auto setting : settings) {
            PolicyWiring wiring = make_wiring(setting, heuristic, learned, gamma);
            EpisodeOptions opt = base_opt;
            opt.seed = split_seed(seed, 0xE7A1);
            MatrixRow row;
            row.setting = to_string(setting);
            row.seed = seed;
            row.report =
                run_episode(backend, vehicles, requests, cfg.episode_length, wiring, opt);
            rows.push_back(row);
        }
    }
    return rows;
}

inline void write_metrics_csv(const std::vector<MatrixRow>& rows, std::ostream& out) {
    out << "setting,seed,arrived,accepted,rejected,service_rate,rejection_rate,"
           "conf_latency_ms_p50,conf_latency_ms_p95,fairness_std\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        out << row.setting << ',' << row.seed << ',' << r.arrived << ',' << r.accepted
            << ',' << r.rejected << ',' << detail::format_double(r.service_rate) << ','
            << detail::format_double(r.rejection_rate) << ',' << detail::format_double(r.latency_ms_p50)
            << ',' << detail::format_double(r.latency_ms_p95) << ',' << detail::format_double(r.fairness_std)
            << '\n';
    }
}

}  // namespace dvrp
