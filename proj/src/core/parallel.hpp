#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace adrrec {

// Worker cap: min(hardware, 4) unless ADRREC_THREADS overrides. Results are
// bit-identical for any thread count: work items write disjoint slices and
// reductions happen in chunk-index order.
inline int max_threads() {
    static const int n = [] {
        int cap = static_cast<int>(std::min(4u, std::max(1u, std::thread::hardware_concurrency())));
        if (const char* env = std::getenv("ADRREC_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) cap = v;
        }
        return cap;
    }();
    return n;
}

inline void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int nt = std::min<int64_t>(max_threads(), n);
    if (nt <= 1 || n < 2) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    for (int t = 0; t < nt; ++t) {
        workers.emplace_back([&, t] {
            for (int64_t i = t; i < n; i += nt) fn(i);
        });
    }
    for (auto& w : workers) w.join();
}

}  // namespace adrrec
