#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace dvrp {

// All times and durations are doubles in scenario time units.
using Time = double;
using Duration = double;

inline constexpr double kTimeEps = 1e-9;       // tolerance for all time comparisons
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline bool leq(double a, double b) { return a <= b + kTimeEps; }
inline bool geq(double a, double b) { return a + kTimeEps >= b; }

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BackendMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnreachableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic 64-bit RNG (xoshiro-style splitmix init). All stochastic
// behavior in the library flows through this so runs are reproducible
// across platforms regardless of standard-library distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // warm up so nearby seeds decorrelate
        next();
        next();
    }

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return n ? next() % n : 0; }

    double exponential(double mean) { return -mean * std::log1p(-uniform()); }

    double normal() {
        // Box-Muller; one value per call is fine at our scale
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

// Documented seed-splitting scheme: a stream id is folded into the master
// seed so per-episode and per-optimizer streams are independent.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    return z ^ (z >> 27);
}

}  // namespace dvrp
