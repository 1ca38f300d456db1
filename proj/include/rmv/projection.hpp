#pragma once

// Euclidean projection onto the slab-box set
//
//     { x in [0,1]^N : mean(x) = q }
//
// and its split into a common shift (the interaction increment) and per-coordinate
// clamp excesses (the reflection increments). The projection has the form
// x_i = clip(y_i + lambda, 0, 1) where lambda is a root of the nondecreasing
// piecewise-linear map g(lambda) = mean(clip(y + lambda)) - q.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmv {

struct ProjectionResult {
    std::vector<double> x;
    /// Common shift; the discrete interaction increment.
    double lambda = 0.0;
    /// Signed clamp excess: > 0 at the upper face, < 0 at the lower face.
    std::vector<double> dk;
    /// Every coordinate clipped at the root, so lambda sits on a plateau of g.
    bool corner = false;
};

namespace detail {

/// Neumaier compensated sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double clip01(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

struct ActiveSet {
    std::size_t n_free = 0;
    std::size_t n_high = 0;
    double sum_free_y = 0.0;
};

// Coordinates with y_i + lambda in [0,1] count as free.
inline ActiveSet classify(std::span<const double> y, double lambda) {
    ActiveSet s;
    CompensatedSum acc;
    for (double v : y) {
        const double z = v + lambda;
        if (z > 1.0) {
            ++s.n_high;
        } else if (z >= 0.0) {
            ++s.n_free;
            acc.add(v);
        }
    }
    s.sum_free_y = acc.value();
    return s;
}

struct Event {
    double at;
    bool to_free;  // lower breakpoint -y_i: coordinate leaves the lower face
    double y;
};

// Locate the linear piece of g that holds the root by sorting the breakpoints
// inside a bracket [lo, hi] with g(lo) < 0 <= g(hi).
inline double root_by_breakpoints(std::span<const double> y, double nq, double lo, double hi) {
    ActiveSet s;
    CompensatedSum acc;
    std::vector<Event> events;
    for (double v : y) {
        const double lower = -v;
        const double upper = 1.0 - v;
        if (upper <= lo) {
            ++s.n_high;
        } else if (lower <= lo) {
            ++s.n_free;
            acc.add(v);
        }
        if (lower > lo && lower < hi) events.push_back({lower, true, v});
        if (upper > lo && upper < hi) events.push_back({upper, false, v});
    }
    s.sum_free_y = acc.value();
    std::stable_sort(events.begin(), events.end(),
                     [](const Event& a, const Event& b) { return a.at < b.at; });

    double sum_free = s.sum_free_y;
    double n_free = static_cast<double>(s.n_free);
    double n_high = static_cast<double>(s.n_high);
    double a = lo;
    auto g_at = [&](double lam) { return sum_free + n_free * lam + n_high - nq; };
    for (std::size_t k = 0; k <= events.size(); ++k) {
        const double b = k < events.size() ? events[k].at : hi;
        if (g_at(b) >= 0.0) {
            if (n_free > 0.0) return std::clamp((nq - n_high - sum_free) / n_free, a, b);
            return 0.5 * (a + b);
        }
        if (k < events.size()) {
            const Event& e = events[k];
            if (e.to_free) {
                n_free += 1.0;
                sum_free += e.y;
            } else {
                n_free -= 1.0;
                sum_free -= e.y;
                n_high += 1.0;
            }
            a = b;
        }
    }
    return hi;
}

}  // namespace detail

/// Exact projection of y onto {x in [0,1]^N, mean(x) = q}. A few O(N) active-set
/// passes usually suffice; the sorted breakpoint walk is the fallback.
inline ProjectionResult project_constrained(std::span<const double> y, double q, double tol = 1e-9) {
    const std::size_t n = y.size();
    if (n == 0) throw std::invalid_argument("project_constrained: empty input");
    if (!(q > 0.0 && q < 1.0))
        throw std::domain_error("project_constrained: target mean must lie in (0,1), got " +
                                std::to_string(q));
    if (!(tol > 0.0)) throw std::invalid_argument("project_constrained: tol must be positive");
    for (double v : y)
        if (!std::isfinite(v)) throw std::domain_error("project_constrained: non-finite input");

    const double nd = static_cast<double>(n);
    const double nq = nd * q;
    detail::CompensatedSum total;
    for (double v : y) total.add(v);
    const double shift = (nq - total.value()) / nd;

    ProjectionResult r;
    r.x.resize(n);
    r.dk.assign(n, 0.0);

    const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
    // Already feasible up to one ulp of the mean: leave y untouched (idempotence).
    if (*mn >= 0.0 && *mx <= 1.0 && std::abs(shift) <= std::numeric_limits<double>::epsilon()) {
        r.x.assign(y.begin(), y.end());
        return r;
    }
    if (*mn + shift >= 0.0 && *mx + shift <= 1.0) {
        r.lambda = shift;
        for (std::size_t i = 0; i < n; ++i) r.x[i] = y[i] + shift;
        return r;
    }

    // Bracket: g(-max y) = -q < 0 and g(1 - min y) = 1 - q > 0. Newton on the
    // active set of the current iterate lands on the root once that set is
    // stable; the bracket guards against cycling between pieces.
    double lo = -*mx;
    double hi = 1.0 - *mn;
    double lambda = shift;
    bool settled = false;
    for (int it = 0; it < 40 && !settled; ++it) {
        if (!(lambda > lo && lambda < hi)) lambda = 0.5 * (lo + hi);
        const detail::ActiveSet s = detail::classify(y, lambda);
        const double nf = static_cast<double>(s.n_free);
        const double g = s.sum_free_y + nf * lambda + static_cast<double>(s.n_high) - nq;
        if (g >= 0.0)
            hi = lambda;
        else
            lo = lambda;
        if (s.n_free == 0) {
            lambda = 0.5 * (lo + hi);
            continue;
        }
        const double next = (nq - static_cast<double>(s.n_high) - s.sum_free_y) / nf;
        settled = std::abs(next - lambda) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(lambda));
        lambda = next;
    }
    if (!settled) lambda = detail::root_by_breakpoints(y, nq, lo, hi);

    // Recompute lambda from exact sums over the identified active set.
    for (int polish = 0; polish < 4; ++polish) {
        const detail::ActiveSet s = detail::classify(y, lambda);
        if (s.n_free == 0) break;
        const double next = (nq - static_cast<double>(s.n_high) - s.sum_free_y) /
                            static_cast<double>(s.n_free);
        if (next == lambda) break;
        lambda = next;
    }

    {
        // Plateau of g: every coordinate on or beyond a face, so the root set is an
        // interval [left, right] and lambda is its midpoint.
        double left = -std::numeric_limits<double>::infinity();
        double right = std::numeric_limits<double>::infinity();
        bool all_clipped = true;
        for (double v : y) {
            const double z = v + lambda;
            if (z <= 0.0)
                right = std::min(right, -v);
            else if (z >= 1.0)
                left = std::max(left, 1.0 - v);
            else
                all_clipped = false;
        }
        if (all_clipped && left < right) {
            r.corner = true;
            lambda = 0.5 * (left + right);
        }
    }

    r.lambda = lambda;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = y[i] + lambda;
        r.x[i] = detail::clip01(z);
        r.dk[i] = z - r.x[i];
    }

    detail::CompensatedSum check;
    for (double v : r.x) check.add(v);
    if (std::abs(check.value() / nd - q) > tol)
        throw std::logic_error("project_constrained: mean residual exceeds tolerance");
    return r;
}

// --- face geometry of the moving polytope -------------------------------------------------

/// Reflection direction on the face {x_i = m} in the frame of the hyperplane:
/// gamma = (-1)^m (e_i - 1/N). Indices are zero-based.
template <typename T = double>
struct FaceNormal {
    std::size_t i = 0;
    int m = 0;
    std::vector<T> gamma;
};

template <typename T = double>
FaceNormal<T> face_normal(std::size_t i, int m, std::size_t n) {
    if (n == 0 || i >= n) throw std::out_of_range("face_normal: particle index out of range");
    if (m != 0 && m != 1) throw std::out_of_range("face_normal: face label must be 0 or 1");
    const T inv_n = T(1) / T(static_cast<long>(n));
    const T sign = m == 0 ? T(1) : T(-1);
    FaceNormal<T> f{i, m, std::vector<T>(n)};
    for (std::size_t j = 0; j < n; ++j) f.gamma[j] = sign * ((j == i ? T(1) : T(0)) - inv_n);
    return f;
}

template <typename T>
T dot(const std::vector<T>& a, const std::vector<T>& b) {
    T acc = T(0);
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

/// Nonnegative cone coefficients c[i][m] with Pi(x - y) = sum c[i][m] gamma_{i,m},
/// Pi removing the component along (1,...,1).
struct ConeDecomposition {
    std::vector<std::array<double, 2>> c;
    /// max-norm of Pi(x - y) - sum c gamma
    double residual = 0.0;
    /// All coordinates sit on faces: the coefficients are not unique there.
    bool non_unique = false;
};

inline ConeDecomposition decompose_as_cone(const ProjectionResult& r) {
    const std::size_t n = r.x.size();
    ConeDecomposition d;
    d.c.assign(n, {0.0, 0.0});
    d.non_unique = r.corner;
    for (std::size_t i = 0; i < n; ++i) {
        if (r.dk[i] > 0.0) d.c[i][1] = r.dk[i];
        if (r.dk[i] < 0.0) d.c[i][0] = -r.dk[i];
    }
    // x - y = lambda 1 - dk, so Pi(x - y) = -Pi(dk).
    double mean_dk = 0.0;
    for (double v : r.dk) mean_dk += v;
    mean_dk /= static_cast<double>(n);
    double c_total[2] = {0.0, 0.0};
    for (const auto& ci : d.c) {
        c_total[0] += ci[0];
        c_total[1] += ci[1];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double lhs = -(r.dk[j] - mean_dk);
        // sum_i c_{i,0}(e_i - 1/N)_j - c_{i,1}(e_i - 1/N)_j
        const double rhs = (d.c[j][0] - c_total[0] * inv_n) - (d.c[j][1] - c_total[1] * inv_n);
        d.residual = std::max(d.residual, std::abs(lhs - rhs));
    }
    return d;
}

/// Debug export: one row per (i, m), columns gamma_0..gamma_{N-1}.
inline void write_face_normals_csv(std::ostream& os, std::size_t n) {
    os << "i,m";
    for (std::size_t j = 0; j < n; ++j) os << ",g" << j;
    os << '\n';
    for (std::size_t i = 0; i < n; ++i)
        for (int m = 0; m <= 1; ++m) {
            const auto f = face_normal(i, m, n);
            os << i << ',' << m;
            for (double g : f.gamma) os << ',' << g;
            os << '\n';
        }
}

}  // namespace rmv
