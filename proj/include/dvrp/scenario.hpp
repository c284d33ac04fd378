#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dvrp/common.hpp"
#include "dvrp/network.hpp"
#include "dvrp/types.hpp"

namespace dvrp {

// Everything a run needs: travel-time backend, fleet, and the stochastic
// request stream parameters. Loaded from a key-value config file.
struct ScenarioConfig {
    // backend
    TravelTimeBackend::Kind backend = TravelTimeBackend::Kind::euclidean;
    double box_width = 2500.0;
    double box_height = 2500.0;
    double speed = 1.0;
    std::string graph_path;

    // fleet
    int vehicle_count = 4;
    int capacity = 8;
    double depot_x = 1250.0;  // box center by default
    double depot_y = 1250.0;
    int depot_node = 0;
    // Shifts run well past the episode: bookings keep a mean lead of 7200
    // time units, so most pickups land after the last arrival.
    Duration shift_length = 20160.0;  // 0 = full episode

    // request stream; times are unitless, with one hour equal to 720 units
    // (a 12-hour episode of 8640 units sees about 48 requests)
    double arrival_rate = 20.0 / 3600.0;  // requests per time unit
    Duration lead_mean = 7200.0;          // earliest_pickup - arrival
    double window_beta = 2.0;             // latest = earliest + max(beta*D, window_min)
    Duration window_min = 600.0;
    Duration episode_length = 8640.0;
    int passengers = 1;

    Duration shift_end() const { return shift_length > 0.0 ? shift_length : episode_length; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Deterministic shortest round-trip decimal rendering so CSVs are
// byte-identical across runs and platforms.
inline std::string format_double(double v) {
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

}  // namespace detail

// Config file: one `key = value` per line, `#` comments, mandatory
// `schema_version = 1`. Unknown keys are rejected so typos fail loudly.
inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);

    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key or value");
        if (kv.count(key))
            throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key " + key);
        kv[key] = value;
    }

    auto take = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) return std::string();
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    auto number = [&](const std::string& key, double fallback) {
        std::string v = take(key);
        if (v.empty()) return fallback;
        try {
            std::size_t pos = 0;
            double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError(path + ": key " + key + ": not a number: " + v);
        }
    };

    std::string schema = take("schema_version");
    if (schema.empty()) throw ConfigError(path + ": missing schema_version");
    if (schema != "1") throw ConfigError(path + ": unsupported schema_version " + schema);

    ScenarioConfig cfg;
    std::string backend = take("backend");
    if (backend.empty() || backend == "euclidean") {
        cfg.backend = TravelTimeBackend::Kind::euclidean;
    } else if (backend == "graph") {
        cfg.backend = TravelTimeBackend::Kind::graph;
    } else {
        throw ConfigError(path + ": backend must be euclidean or graph, got " + backend);
    }
    cfg.box_width = number("box_width", cfg.box_width);
    cfg.box_height = number("box_height", cfg.box_height);
    cfg.speed = number("speed", cfg.speed);
    cfg.graph_path = take("graph_path");
    cfg.vehicle_count = static_cast<int>(number("vehicles", cfg.vehicle_count));
    cfg.capacity = static_cast<int>(number("capacity", cfg.capacity));
    cfg.depot_x = number("depot_x", cfg.box_width / 2.0);
    cfg.depot_y = number("depot_y", cfg.box_height / 2.0);
    cfg.depot_node = static_cast<int>(number("depot_node", cfg.depot_node));
    cfg.shift_length = number("shift_length", cfg.shift_length);
    cfg.arrival_rate = number("arrival_rate", cfg.arrival_rate);
    cfg.lead_mean = number("lead_mean", cfg.lead_mean);
    cfg.window_beta = number("window_beta", cfg.window_beta);
    cfg.window_min = number("window_min", cfg.window_min);
    cfg.episode_length = number("episode_length", cfg.episode_length);
    cfg.passengers = static_cast<int>(number("passengers", cfg.passengers));

    if (!kv.empty()) throw ConfigError(path + ": unknown key " + kv.begin()->first);

    if (cfg.arrival_rate <= 0.0) throw ConfigError(path + ": arrival_rate must be positive");
    if (cfg.episode_length < 0.0) throw ConfigError(path + ": episode_length must be >= 0");
    if (cfg.vehicle_count < 0) throw ConfigError(path + ": vehicles must be >= 0");
    if (cfg.capacity < 1) throw ConfigError(path + ": capacity must be >= 1");
    if (cfg.lead_mean < 0.0) throw ConfigError(path + ": lead_mean must be >= 0");
    if (cfg.passengers < 1) throw ConfigError(path + ": passengers must be >= 1");
    if (cfg.backend == TravelTimeBackend::Kind::graph && cfg.graph_path.empty())
        throw ConfigError(path + ": graph backend requires graph_path");
    if (cfg.backend == TravelTimeBackend::Kind::euclidean &&
        (cfg.box_width <= 0.0 || cfg.box_height <= 0.0 || cfg.speed <= 0.0))
        throw ConfigError(path + ": box dimensions and speed must be positive");
    return cfg;
}

inline TravelTimeBackend make_backend(const ScenarioConfig& cfg) {
    if (cfg.backend == TravelTimeBackend::Kind::graph) return load_graph(cfg.graph_path);
    return TravelTimeBackend::euclidean(BoundingBox{0.0, 0.0, cfg.box_width, cfg.box_height},
                                        cfg.speed);
}

inline std::vector<Vehicle> make_vehicles(const ScenarioConfig& cfg) {
    Location depot = cfg.backend == TravelTimeBackend::Kind::graph
                         ? at_node(cfg.depot_node)
                         : planar(cfg.depot_x, cfg.depot_y);
    std::vector<Vehicle> out;
    out.reserve(static_cast<std::size_t>(cfg.vehicle_count));
    for (int i = 0; i < cfg.vehicle_count; ++i)
        out.push_back(Vehicle{i, cfg.capacity, 0.0, cfg.shift_end(), depot});
    return out;
}

// Stochastic request stream: Poisson arrivals over the episode, exponential
// booking lead times, uniform pickup/dropoff locations, and a dropoff
// deadline of earliest + max(beta * direct travel, minimum window).
inline std::vector<Request> generate_requests(const ScenarioConfig& cfg,
                                              const TravelTimeBackend& backend,
                                              std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Request> out;
    auto random_location = [&]() {
        if (cfg.backend == TravelTimeBackend::Kind::graph)
            return at_node(static_cast<int>(rng.below(backend.node_count())));
        return planar(rng.uniform(0.0, cfg.box_width), rng.uniform(0.0, cfg.box_height));
    };

    Time t = 0.0;
    RequestId id = 1;
    for (;;) {
        t += rng.exponential(1.0 / cfg.arrival_rate);
        if (t > cfg.episode_length) break;
        Request r;
        r.id = id++;
        r.arrival_time = t;
        r.pickup = random_location();
        r.dropoff = random_location();
        r.earliest_pickup = t + rng.exponential(cfg.lead_mean);
        Duration direct = backend.travel_time_raw(r.pickup, r.dropoff);
        r.latest_dropoff =
            r.earliest_pickup + std::max(cfg.window_beta * direct, cfg.window_min);
        r.passengers = cfg.passengers;
        out.push_back(r);
    }
    return out;
}

// Request CSV. Planar scenarios carry coordinates, graph scenarios node ids;
// the header disambiguates on read.
inline void write_requests_csv(const std::vector<Request>& requests, std::ostream& out,
                               bool graph_backend) {
    if (graph_backend)
        out << "id,pickup_node,dropoff_node,earliest,latest,arrival,passengers\n";
    else
        out << "id,pickup_x,pickup_y,dropoff_x,dropoff_y,earliest,latest,arrival,passengers\n";
    for (const auto& r : requests) {
        out << r.id << ',';
        if (graph_backend)
            out << r.pickup.node << ',' << r.dropoff.node << ',';
        else
            out << detail::format_double(r.pickup.x) << ',' << detail::format_double(r.pickup.y)
                << ',' << detail::format_double(r.dropoff.x) << ','
                << detail::format_double(r.dropoff.y) << ',';
        out << detail::format_double(r.earliest_pickup) << ','
            << detail::format_double(r.latest_dropoff) << ','
            << detail::format_double(r.arrival_time) << ',' << r.passengers << '\n';
    }
}

inline void write_requests_csv(const std::vector<Request>& requests, const std::string& path,
                               bool graph_backend) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write request file: " + path);
    write_requests_csv(requests, out, graph_backend);
}

inline std::vector<Request> read_requests_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open request file: " + path);

    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    if (!std::getline(in, line)) fail("missing header");
    ++line_no;
    std::string header = detail::trim(line);
    bool graph_backend;
    if (header == "id,pickup_node,dropoff_node,earliest,latest,arrival,passengers")
        graph_backend = true;
    else if (header ==
             "id,pickup_x,pickup_y,dropoff_x,dropoff_y,earliest,latest,arrival,passengers")
        graph_backend = false;
    else
        fail("unrecognized header: " + header);

    std::vector<Request> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(detail::trim(field));
        std::size_t expected = graph_backend ? 7 : 9;
        if (fields.size() != expected)
            fail("expected " + std::to_string(expected) + " fields, got " +
                 std::to_string(fields.size()));
        try {
            Request r;
            std::size_t k = 0;
            r.id = std::stoll(fields[k++]);
            if (graph_backend) {
                r.pickup = at_node(std::stoi(fields[k++]));
                r.dropoff = at_node(std::stoi(fields[k++]));
            } else {
                double px = std::stod(fields[k++]);
                double py = std::stod(fields[k++]);
                double dx = std::stod(fields[k++]);
                double dy = std::stod(fields[k++]);
                r.pickup = planar(px, py);
                r.dropoff = planar(dx, dy);
            }
            r.earliest_pickup = std::stod(fields[k++]);
            r.latest_dropoff = std::stod(fields[k++]);
            r.arrival_time = std::stod(fields[k++]);
            r.passengers = std::stoi(fields[k++]);
            if (r.earliest_pickup < 0.0 || r.arrival_time < 0.0 || r.latest_dropoff < 0.0)
                fail("times must be non-negative");
            out.push_back(r);
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            fail("malformed numeric field");
        }
    }
    std::sort(out.begin(), out.end(),
              [](const Request& a, const Request& b) { return a.arrival_time < b.arrival_time; });
    return out;
}

}  // namespace dvrp
