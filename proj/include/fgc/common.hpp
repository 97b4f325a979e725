#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgc {

// Thrown when tensor/model shapes are incompatible. Message names both shapes.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on malformed files, unreadable paths, bad magic bytes.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation produces NaN/inf or receives non-finite input.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown on inconsistent model/branch configuration (e.g. branch depth > layer count).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Row-major dense matrix of doubles. The plain-value counterpart of nn::Tensor,
// used wherever gradients are not needed (DSP, metrics, serialization).
struct Mat {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int64_t r, int64_t c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

    double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
    bool empty() const { return v.empty(); }
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to seed label embeddings from strings.
inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-based PRNG: each draw hashes an incrementing counter with splitmix64.
// Deterministic across platforms for a fixed seed; no hidden distribution state
// besides the Box-Muller spare.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_++); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
        return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
    }

    // Standard normal via Box-Muller.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Rng fork(uint64_t stream) { return Rng(splitmix64(state_ ^ (stream * 0x9e3779b97f4a7c15ULL))); }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Worker-thread cap for embarrassingly parallel loops; reads FGC_THREADS.
// Defaults to 1 so runs are sequential unless the user opts in.
int worker_threads();

// Runs fn(i) for i in [0, n), possibly on worker_threads() threads. Each index
// writes only its own outputs, so the schedule cannot change results.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace fgc
