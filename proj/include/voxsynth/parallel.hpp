#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace voxsynth {

// VOXSYNTH_WORKERS if set and positive, else the hardware concurrency.
inline int default_worker_count() {
    if (const char *env = std::getenv("VOXSYNTH_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Items are handed out
// dynamically; callers must write results into per-item slots so the outcome
// is independent of scheduling. The first exception is rethrown after all
// threads join.
template <class Fn>
void parallel_for(std::int64_t n, int workers, Fn &&fn) {
    if (n <= 0) return;
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::min<std::int64_t>(n, 1 << 16))));
    if (workers == 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
    pool.clear();
    if (error) std::rethrow_exception(error);
}

}  // namespace voxsynth
