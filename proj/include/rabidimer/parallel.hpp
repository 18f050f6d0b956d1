// parallel.hpp - bounded worker pool for independent tasks

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rabidimer {

inline int default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks are handed
// out in index order; if any throw, the exception of the lowest failing
// index is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& fn) {
    if (n == 0) return;
    const std::size_t nt = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr failure;
    auto body = [&] {
        for (;;) {
            if (stop.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
                stop = true;
            }
        }
    };
    if (nt == 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(nt);
        for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(body);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace rabidimer
