#pragma once

// Parallel loop over disjoint index ranges. Workers write to preallocated
// per-index slots only, so the result is identical for any worker count; the
// THINTIME_THREADS environment variable caps concurrency.

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace thintime {

inline unsigned resolve_worker_count(unsigned requested = 0) {
    unsigned n = requested != 0 ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("THINTIME_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
        } catch (...) {
            // ignore malformed values; keep the default
        }
    }
    return std::max(1u, n);
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& body, unsigned workers = 0) {
    const unsigned nw = std::min<std::size_t>(resolve_worker_count(workers), n == 0 ? 1 : n);
    if (nw <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nw);
    const std::size_t chunk = (n + nw - 1) / nw;
    for (unsigned w = 0; w < nw; ++w) {
        const std::size_t begin = static_cast<std::size_t>(w) * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &body] {
            for (std::size_t i = begin; i < end; ++i) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace thintime
