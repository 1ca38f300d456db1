#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rmv {

/// One gap between consecutive report times, split into equal steps.
struct TimeSegment {
    double t0 = 0.0;
    double t1 = 0.0;
    std::size_t steps = 0;
    double dt = 0.0;
};

/// Splits [0, last snapshot] so every snapshot is hit exactly: each gap uses the
/// largest step <= dt that divides it.
inline std::vector<TimeSegment> plan_segments(const std::vector<double>& snapshot_times, double dt,
                                              double horizon) {
    if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
    if (snapshot_times.empty()) throw std::invalid_argument("at least one snapshot time is required");
    std::vector<TimeSegment> out;
    double prev = 0.0;
    for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
        const double t = snapshot_times[k];
        if (t < 0.0 || t > horizon * (1.0 + 1e-12))
            throw std::invalid_argument("snapshot times must lie in [0, horizon]");
        if (k > 0 && !(t > snapshot_times[k - 1]))
            throw std::invalid_argument("snapshot times must be strictly increasing");
        const double gap = t - prev;
        if (gap > 0.0) {
            // Tolerate rounding in gap/dt before taking the ceiling.
            auto n = static_cast<std::size_t>(std::ceil(gap / dt * (1.0 - 1e-12)));
            n = n == 0 ? 1 : n;
            out.push_back({prev, t, n, gap / static_cast<double>(n)});
        } else {
            out.push_back({prev, t, 0, 0.0});
        }
        prev = t;
    }
    return out;
}

/// n+1 equispaced times on [0, horizon].
inline std::vector<double> uniform_times(double horizon, std::size_t n) {
    std::vector<double> t(n + 1);
    for (std::size_t k = 0; k <= n; ++k) t[k] = horizon * static_cast<double>(k) / static_cast<double>(n);
    return t;
}

}  // namespace rmv
