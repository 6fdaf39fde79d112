#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace gpdf {

/// Runs fn(begin, end) over [0, n) split across hardware threads. Falls back
/// to a direct call for small ranges. Chunk boundaries are deterministic; fn
/// must only write to per-index slots.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)> &fn,
                         std::size_t min_grain = 64) {
    if (n == 0) return;
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t workers = std::min(hw, std::max<std::size_t>(1, n / min_grain));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto &t : threads) t.join();
}

}  // namespace gpdf
