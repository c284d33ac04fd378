#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dvrp/common.hpp"

namespace dvrp {

// A location is either a point on the plane (node < 0) or a node of a
// loaded road graph (node >= 0). Graph locations also carry the node's
// coordinates once resolved against a backend, so spatial binning works
// uniformly for both variants.
struct Location {
    double x = 0.0;
    double y = 0.0;
    int node = -1;

    bool is_node() const { return node >= 0; }

    friend bool operator==(const Location& a, const Location& b) {
        if (a.node >= 0 || b.node >= 0) return a.node == b.node;
        return a.x == b.x && a.y == b.y;
    }
};

inline Location planar(double x, double y) { return Location{x, y, -1}; }
inline Location at_node(int node) { return Location{0.0, 0.0, node}; }

struct BoundingBox {
    double min_x = 0.0, min_y = 0.0;
    double max_x = 0.0, max_y = 0.0;
};

// Travel-time provider: a Euclidean plane with constant speed, or a loaded
// directed weighted graph with a precomputed all-pairs travel-time matrix.
class TravelTimeBackend {
public:
    enum class Kind { euclidean, graph };

    static TravelTimeBackend euclidean(BoundingBox box, double speed = 1.0) {
        TravelTimeBackend b;
        b.kind_ = Kind::euclidean;
        b.box_ = box;
        b.speed_ = speed;
        return b;
    }

    static TravelTimeBackend graph(std::vector<std::pair<double, double>> coords,
                                   std::vector<double> matrix) {
        TravelTimeBackend b;
        b.kind_ = Kind::graph;
        b.coords_ = std::move(coords);
        b.matrix_ = std::move(matrix);
        b.node_count_ = b.coords_.size();
        if (b.matrix_.size() != b.node_count_ * b.node_count_)
            throw ValidationError("travel-time matrix size does not match node count");
        b.box_ = BoundingBox{kInfinity, kInfinity, -kInfinity, -kInfinity};
        for (auto& [x, y] : b.coords_) {
            b.box_.min_x = std::min(b.box_.min_x, x);
            b.box_.min_y = std::min(b.box_.min_y, y);
            b.box_.max_x = std::max(b.box_.max_x, x);
            b.box_.max_y = std::max(b.box_.max_y, y);
        }
        return b;
    }

    Kind kind() const { return kind_; }
    const BoundingBox& box() const { return box_; }
    double speed() const { return speed_; }
    std::size_t node_count() const { return node_count_; }

    // Fills in planar coordinates for graph locations so downstream code
    // (spatial binning, plotting) can treat locations uniformly.
    Location resolve(Location l) const {
        if (kind_ == Kind::graph && l.node >= 0) {
            l.x = coords_[static_cast<std::size_t>(l.node)].first;
            l.y = coords_[static_cast<std::size_t>(l.node)].second;
        }
        return l;
    }

    void check(const Location& l) const {
        if (kind_ == Kind::euclidean) {
            if (l.is_node())
                throw BackendMismatchError("graph location passed to euclidean backend");
        } else {
            if (!l.is_node())
                throw BackendMismatchError("planar location passed to graph backend");
            if (static_cast<std::size_t>(l.node) >= node_count_)
                throw ValidationError("node index out of range");
        }
    }

    // D(a, b); may return +infinity for unreachable graph pairs. Feasibility
    // treats an infinite leg as a violation rather than an exception.
    Duration travel_time_raw(const Location& a, const Location& b) const {
        check(a);
        check(b);
        if (kind_ == Kind::euclidean) {
            double dx = a.x - b.x;
            double dy = a.y - b.y;
            return std::sqrt(dx * dx + dy * dy) / speed_;
        }
        return matrix_[static_cast<std::size_t>(a.node) * node_count_ +
                       static_cast<std::size_t>(b.node)];
    }

    Duration travel_time(const Location& a, const Location& b) const {
        Duration d = travel_time_raw(a, b);
        if (std::isinf(d)) throw UnreachableError("no path between locations");
        return d;
    }

private:
    Kind kind_ = Kind::euclidean;
    BoundingBox box_;
    double speed_ = 1.0;
    std::vector<std::pair<double, double>> coords_;
    std::vector<double> matrix_;  // row-major n*n
    std::size_t node_count_ = 0;
};

inline Duration travel_time(const TravelTimeBackend& b, const Location& from,
                            const Location& to) {
    return b.travel_time(from, to);
}

namespace detail {

// Dijkstra from one source over an adjacency list.
inline void single_source_times(std::size_t src,
                                const std::vector<std::vector<std::pair<std::size_t, double>>>& adj,
                                double* out) {
    const std::size_t n = adj.size();
    std::fill(out, out + n, kInfinity);
    out[src] = 0.0;
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > out[u]) continue;
        for (auto [v, w] : adj[u]) {
            double nd = d + w;
            if (nd < out[v]) {
                out[v] = nd;
                pq.emplace(nd, v);
            }
        }
    }
}

}  // namespace detail

// Graph file format (text, line-oriented):
//   nodes N edges M
//   node <id> <x> <y>          (N lines)
//   edge <from> <to> <time>    (M lines, directed; duplicates keep min weight)
inline TravelTimeBackend load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open graph file: " + path);

    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": " + msg);
    };

    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
                return true;
        }
        return false;
    };

    if (!next_line()) fail("missing header");
    std::size_t n = 0, m = 0;
    {
        std::istringstream ss(line);
        std::string kw_nodes, kw_edges;
        if (!(ss >> kw_nodes >> n >> kw_edges >> m) || kw_nodes != "nodes" || kw_edges != "edges")
            fail("expected header 'nodes N edges M'");
    }

    std::vector<std::pair<double, double>> coords(n);
    std::vector<bool> declared(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!next_line()) fail("unexpected end of file in node section");
        std::istringstream ss(line);
        std::string kw;
        long long id;
        double x, y;
        if (!(ss >> kw >> id >> x >> y) || kw != "node") fail("expected 'node <id> <x> <y>'");
        if (id < 0 || static_cast<std::size_t>(id) >= n) fail("node id out of range");
        coords[static_cast<std::size_t>(id)] = {x, y};
        declared[static_cast<std::size_t>(id)] = true;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!declared[i]) fail("node " + std::to_string(i) + " not declared");

    std::vector<std::vector<std::pair<std::size_t, double>>> adj(n);
    for (std::size_t i = 0; i < m; ++i) {
        if (!next_line()) fail("unexpected end of file in edge section");
        std::istringstream ss(line);
        std::string kw;
        long long from, to;
        double w;
        if (!(ss >> kw >> from >> to >> w) || kw != "edge") fail("expected 'edge <from> <to> <time>'");
        if (from < 0 || static_cast<std::size_t>(from) >= n) fail("edge references undeclared node");
        if (to < 0 || static_cast<std::size_t>(to) >= n) fail("edge references undeclared node");
        if (w < 0.0) fail("negative edge weight");
        auto& row = adj[static_cast<std::size_t>(from)];
        auto it = std::find_if(row.begin(), row.end(),
                               [&](const auto& e) { return e.first == static_cast<std::size_t>(to); });
        if (it == row.end())
            row.emplace_back(static_cast<std::size_t>(to), w);
        else
            it->second = std::min(it->second, w);
    }

    std::vector<double> matrix(n * n, kInfinity);
    for (std::size_t s = 0; s < n; ++s)
        detail::single_source_times(s, adj, matrix.data() + s * n);

    return TravelTimeBackend::graph(std::move(coords), std::move(matrix));
}

// Uniform g x g partition of the backend's bounding box. Returns 1-based
// (row, col); a point on an interior cell boundary belongs to the
// higher-index cell, the maximum boundary belongs to cell g.
inline std::pair<int, int> spatial_cell(const TravelTimeBackend& backend, Location l, int g) {
    if (g < 1) throw ConfigError("grid dimension must be >= 1");
    backend.check(l);
    l = backend.resolve(l);
    const auto& box = backend.box();
    auto bin = [g](double v, double lo, double hi) {
        if (hi <= lo) return 1;
        int c = static_cast<int>(std::floor((v - lo) / (hi - lo) * g)) + 1;
        return std::clamp(c, 1, g);
    };
    return {bin(l.y, box.min_y, box.max_y), bin(l.x, box.min_x, box.max_x)};
}

}  // namespace dvrp
