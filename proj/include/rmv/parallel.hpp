#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace rmv {

/// Worker count: an explicit positive request wins, then SIM_THREADS, then the
/// hardware count.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SIM_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return v;
        } catch (...) {
        }
    }
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Static-schedule parallel loop. Iterations must be independent; results never
/// depend on the thread count.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
#if defined(_OPENMP)
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
#else
    (void)threads;
    for (std::size_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace rmv
