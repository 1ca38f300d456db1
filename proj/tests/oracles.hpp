#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace rmv::oracle {

/// Exhaustive minimization of |y - z|^2 over the mesh {0, h, ..., 1}^N restricted to
/// sum(z) = N q. The mesh minimum is computed exactly by min-plus dynamic
/// programming over partial sums (every mesh point is implicitly enumerated).
///
/// upper_cost, when finite, is the cost of some feasible mesh point. Writing d_k for
/// the distance of y_k to [0,1], a coordinate value with (y_k - z)^2 - d_k^2 above
/// upper_cost - sum d^2 cannot appear in a minimizer and is skipped.
inline std::vector<double> mesh_projection(const std::vector<double>& y, double q, double h,
                                           double upper_cost = std::numeric_limits<double>::infinity()) {
    const std::size_t n = y.size();
    const auto steps = static_cast<long>(std::lround(1.0 / h));
    const auto target = static_cast<long>(std::lround(static_cast<double>(n) * q / h));
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> d2(n);
    double floor_cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = y[k] < 0.0 ? -y[k] : (y[k] > 1.0 ? y[k] - 1.0 : 0.0);
        d2[k] = d * d;
        floor_cost += d2[k];
    }
    const double slack = upper_cost - floor_cost + 1e-12;
    // best[k][s]: min cost of first k coordinates with mesh sum s; choice[k][s]: z_k index.
    std::vector<std::vector<double>> best(n + 1);
    std::vector<std::vector<long>> choice(n + 1);
    best[0] = {0.0};
    for (std::size_t k = 1; k <= n; ++k) {
        const long smax = static_cast<long>(k) * steps;
        best[k].assign(static_cast<std::size_t>(smax + 1), inf);
        choice[k].assign(static_cast<std::size_t>(smax + 1), -1);
        const auto& prev = best[k - 1];
        for (long z = 0; z <= steps; ++z) {
            const double d = y[k - 1] - static_cast<double>(z) * h;
            const double c = d * d;
            if (c - d2[k - 1] > slack) continue;
            // Only the target sum matters in the last layer.
            const long s_lo = k == n ? std::max(0L, target - z) : 0;
            const long s_hi = k == n ? std::min(static_cast<long>(prev.size()) - 1, target - z)
                                     : static_cast<long>(prev.size()) - 1;
            for (long s = s_lo; s <= s_hi; ++s) {
                const double v = prev[static_cast<std::size_t>(s)] + c;
                auto& slot = best[k][static_cast<std::size_t>(s + z)];
                if (v < slot) {
                    slot = v;
                    choice[k][static_cast<std::size_t>(s + z)] = z;
                }
            }
        }
    }
    std::vector<double> z(n);
    long s = target;
    for (std::size_t k = n; k >= 1; --k) {
        const long zk = choice[k][static_cast<std::size_t>(s)];
        z[k - 1] = static_cast<double>(zk) * h;
        s -= zk;
    }
    return z;
}

/// Cost |y - z|^2 of a feasible mesh point near x: floor to the mesh, then hand
/// the missing units to the largest remainders.
inline double rounded_mesh_cost(const std::vector<double>& y, const std::vector<double>& x, double q, double h) {
    const std::size_t n = x.size();
    const auto target = std::lround(static_cast<double>(n) * q / h);
    std::vector<long> units(n);
    std::vector<std::pair<double, std::size_t>> rem(n);
    long total = 0;
    for (std::size_t k = 0; k < n; ++k) {
        units[k] = static_cast<long>(std::floor(x[k] / h));
        rem[k] = {x[k] / h - static_cast<double>(units[k]), k};
        total += units[k];
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const auto limit = std::lround(1.0 / h);
    for (std::size_t j = 0; total < target && j < n; ++j)
        if (units[rem[j].second] < limit) {
            ++units[rem[j].second];
            ++total;
        }
    if (total != target) return std::numeric_limits<double>::infinity();
    double c = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = y[k] - static_cast<double>(units[k]) * h;
        c += d * d;
    }
    return c;
}

/// clip(y + c) with c found by plain bisection on the mean.
inline std::vector<double> bisection_projection(const std::vector<double>& y, double q) {
    auto mean_at = [&](double c) {
        double s = 0.0;
        for (double v : y) s += std::clamp(v + c, 0.0, 1.0);
        return s / static_cast<double>(y.size());
    };
    double lo = -3.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_at(mid) < q ? lo : hi) = mid;
    }
    std::vector<double> x(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::clamp(y[i] + 0.5 * (lo + hi), 0.0, 1.0);
    return x;
}

/// W2 between two equal-size samples by enumerating all n! couplings.
inline double w2_by_permutations(std::vector<double> a, const std::vector<double>& b) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) c += (a[k] - b[perm[k]]) * (a[k] - b[perm[k]]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(a.size()));
}

}  // namespace rmv::oracle
