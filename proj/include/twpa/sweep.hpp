#pragma once

// Parallel execution of independent sweep points on a bounded thread pool.
// The worker count comes from an explicit request, the TWPA_HB_THREADS
// environment variable, or the hardware concurrency, in that order.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "twpa/errors.hpp"

namespace twpa {

/// Resolve the worker count: `requested` > 0 wins, else TWPA_HB_THREADS,
/// else std::thread::hardware_concurrency (at least 1).
inline int resolve_jobs(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("TWPA_HB_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
            throw ConfigError(std::string("TWPA_HB_THREADS is not a positive integer: ") + env);
        }
        throw ConfigError(std::string("TWPA_HB_THREADS is not a positive integer: ") + env);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Run fn(i) for i in [0, n) on up to `jobs` threads.  Results are whatever
/// fn writes into caller-owned, per-index storage; the first exception (if
/// any) is rethrown after all workers finish.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    jobs = std::min(resolve_jobs(jobs), n);
    if (jobs <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace twpa
