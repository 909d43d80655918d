#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace meanode {

// Thrown when a forward pass or training run produces non-finite values.
// `layer` is the first offending layer (1-based), `iteration` the GD step,
// -1 when unknown in the throwing context.
struct DivergenceError : std::runtime_error {
    int layer = -1;
    int iteration = -1;
    DivergenceError(const std::string& msg, int layer_ = -1, int iteration_ = -1)
        : std::runtime_error(msg), layer(layer_), iteration(iteration_) {}
};

// Invalid or inconsistent run configuration; `key` names the offending field.
struct ConfigError : std::runtime_error {
    std::string key;
    ConfigError(const std::string& key_, const std::string& msg)
        : std::runtime_error("config error at '" + key_ + "': " + msg), key(key_) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int default_workers() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(begin, end) over [0, count) split into contiguous chunks, one per
// worker thread. Results must be written to disjoint slots so the outcome is
// independent of scheduling. The first exception thrown by any chunk is
// rethrown on the calling thread.
inline void parallel_for(std::int64_t count, int workers,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (count <= 0) return;
    if (workers < 1) workers = 1;
    std::int64_t nchunks = std::min<std::int64_t>(workers, count);
    if (nchunks == 1) {
        fn(0, count);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(nchunks));
    std::int64_t chunk = (count + nchunks - 1) / nchunks;
    for (std::int64_t c = 0; c < nchunks; ++c) {
        std::int64_t lo = c * chunk;
        std::int64_t hi = std::min(count, lo + chunk);
        pool.emplace_back([&, c, lo, hi] {
            try {
                fn(lo, hi);
            } catch (...) {
                errs[static_cast<std::size_t>(c)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

inline bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

}  // namespace meanode
