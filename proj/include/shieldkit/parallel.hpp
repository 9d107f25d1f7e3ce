#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace shieldkit {

/// Worker count: SHIELDKIT_THREADS if set, otherwise hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("SHIELDKIT_THREADS")) {
        long n = std::atol(env);
        if (n >= 1) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

/// Run fn(begin, end) over disjoint chunks of [0, n). Chunk boundaries are
/// fixed by n alone, so any result written per index is identical for every
/// thread count.
inline void parallel_for(std::uint64_t n, const std::function<void(std::uint64_t, std::uint64_t)>& fn) {
    unsigned workers = thread_count();
    if (workers <= 1 || n < 2048) {
        fn(0, n);
        return;
    }
    std::uint64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr failure;
    std::mutex failure_lock;
    for (std::uint64_t begin = 0; begin < n; begin += chunk) {
        std::uint64_t end = begin + chunk < n ? begin + chunk : n;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> guard(failure_lock);
                if (!failure) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace shieldkit
