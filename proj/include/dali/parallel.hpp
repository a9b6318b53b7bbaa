#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dali {

/// Process-wide parallelism hint. Every parallel loop in the library writes
/// each output element from exactly one task with a fixed reduction order,
/// so results do not depend on this value.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Calls fn(i) for i in [0, n), split into contiguous chunks.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (std::size_t i = 0; i < std::min(n, chunk); ++i) fn(i);
    for (auto& t : pool) t.join();
}

}  // namespace dali
