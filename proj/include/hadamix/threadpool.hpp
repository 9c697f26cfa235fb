#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace hadamix {

// Static fan-out over [0, n): worker w handles the contiguous chunk
// [w*n/W, (w+1)*n/W). Callers that need bit-reproducible results across
// worker counts must keep per-index outputs separate and reduce them in
// index order afterwards; nothing here synchronizes shared accumulators.
inline void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int w = int(std::min<int64_t>(threads, n));
    std::vector<std::thread> pool;
    pool.reserve(size_t(w));
    for (int t = 0; t < w; ++t) {
        int64_t lo = n * t / w;
        int64_t hi = n * (t + 1) / w;
        pool.emplace_back([lo, hi, &fn] {
            for (int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace hadamix
