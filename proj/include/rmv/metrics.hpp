#pragma once

// Comparison layer: 1-D Wasserstein-2 distances, boundary-push and Hoelder
// statistics, twin-ensemble contraction curves, and the N-sweep rate table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmv/fokker_planck.hpp"
#include "rmv/model.hpp"
#include "rmv/particles.hpp"

namespace rmv {

class EmpiricalMeasure {
public:
    EmpiricalMeasure() = default;

    static EmpiricalMeasure from_samples(std::vector<double> s) {
        std::sort(s.begin(), s.end());
        return from_sorted(std::move(s));
    }
    static EmpiricalMeasure from_sorted(std::vector<double> s) {
        if (!std::is_sorted(s.begin(), s.end())) throw std::invalid_argument("empirical measure: samples not sorted");
        for (double v : s)
            if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("empirical measure: support must lie in [0,1]");
        EmpiricalMeasure m;
        m.sorted_ = std::move(s);
        return m;
    }

    const std::vector<double>& sorted_samples() const noexcept { return sorted_; }
    std::size_t size() const noexcept { return sorted_.size(); }
    bool empty() const noexcept { return sorted_.empty(); }

    /// Piecewise-linear quantile through ((k+1/2)/n, x_k), flat beyond the end nodes.
    double quantile(double p) const {
        const auto n = static_cast<double>(sorted_.size());
        const double pos = p * n - 0.5;
        if (pos <= 0.0) return sorted_.front();
        if (pos >= n - 1.0) return sorted_.back();
        const auto k = static_cast<std::size_t>(pos);
        const double w = pos - static_cast<double>(k);
        return (1.0 - w) * sorted_[k] + w * sorted_[k + 1];
    }

    EmpiricalMeasure resampled(std::size_t n) const {
        std::vector<double> out(n);
        for (std::size_t k = 0; k < n; ++k) out[k] = quantile((static_cast<double>(k) + 0.5) / static_cast<double>(n));
        EmpiricalMeasure m;
        m.sorted_ = std::move(out);
        return m;
    }

private:
    std::vector<double> sorted_;
};

/// Exact W2 for equal counts (sorted coupling); unequal counts are first
/// resampled to the larger count by quantile interpolation.
inline double w2_empirical_empirical(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w2: empty measure");
    if (a.size() != b.size()) {
        return a.size() < b.size() ? w2_empirical_empirical(a.resampled(b.size()), b)
                                   : w2_empirical_empirical(a, b.resampled(a.size()));
    }
    const auto& x = a.sorted_samples();
    const auto& y = b.sorted_samples();
    detail::CompensatedSum s;
    for (std::size_t k = 0; k < x.size(); ++k) s.add((x[k] - y[k]) * (x[k] - y[k]));
    return std::sqrt(s.value() / static_cast<double>(x.size()));
}

/// Histogram density of an empirical measure on M uniform cells.
inline DensityGrid histogram(const EmpiricalMeasure& a, std::size_t cells) {
    std::vector<double> m(cells, 0.0);
    const double w = 1.0 / static_cast<double>(a.size());
    for (double v : a.sorted_samples()) {
        auto j = static_cast<std::size_t>(v * static_cast<double>(cells));
        m[std::min(j, cells - 1)] += w;
    }
    return DensityGrid::from_masses(m);
}

/// Quantile-function distance between an empirical measure and a cell density,
/// the density's quantile being piecewise linear in the cell masses; quadrature at
/// the n midpoints (k+1/2)/n.
inline double w2_empirical_density(const EmpiricalMeasure& a, const DensityGrid& u) {
    if (a.empty()) throw std::invalid_argument("w2: empty measure");
    const double mass = u.mass();
    if (std::abs(mass - 1.0) > 1e-8) throw std::domain_error("w2: density not normalized (mass " + std::to_string(mass) + ")");
    const std::size_t n = a.size();
    const std::size_t m = u.cells();
    const double dx = u.dx();
    const auto& x = a.sorted_samples();
    detail::CompensatedSum acc;
    std::size_t j = 0;
    double below = 0.0;  // mass of cells [0, j)
    for (std::size_t k = 0; k < n; ++k) {
        const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(n) * mass;
        while (j + 1 < m && below + u.u[j] * dx < p) {
            below += u.u[j] * dx;
            ++j;
        }
        const double cell_mass = u.u[j] * dx;
        const double frac = cell_mass > 0.0 ? std::clamp((p - below) / cell_mass, 0.0, 1.0) : 0.5;
        const double qx = (static_cast<double>(j) + frac) * dx;
        acc.add((x[k] - qx) * (x[k] - qx));
    }
    return std::sqrt(acc.value() / static_cast<double>(n));
}

/// Density-to-density distance: the n quantile midpoints of u stand in for u.
inline double w2_density_density(const DensityGrid& u, const DensityGrid& v, std::size_t n = 8192) {
    const double dx = u.dx();
    std::vector<double> s(n);
    std::size_t j = 0;
    double below = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double p = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
        while (j + 1 < u.cells() && below + u.u[j] * dx < p) {
            below += u.u[j] * dx;
            ++j;
        }
        const double cell_mass = u.u[j] * dx;
        const double frac = cell_mass > 0.0 ? std::clamp((p - below) / cell_mass, 0.0, 1.0) : 0.5;
        s[k] = std::clamp((static_cast<double>(j) + frac) * dx, 0.0, 1.0);
    }
    return w2_empirical_density(EmpiricalMeasure::from_sorted(std::move(s)), v);
}

/// sup over matching snapshots of w2_density_density; estimates the discretization
/// error of the finer solution when `coarse` uses half the cells.
inline double pde_floor(const FpeRun& fine, const FpeRun& coarse) {
    if (fine.snapshots.size() != coarse.snapshots.size())
        throw std::invalid_argument("pde_floor: snapshot grids differ");
    double sup = 0.0;
    for (std::size_t k = 0; k < fine.snapshots.size(); ++k)
        sup = std::max(sup, w2_density_density(fine.snapshots[k], coarse.snapshots[k]));
    return sup;
}

// --- least squares --------------------------------------------------------------------------

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    const auto n = static_cast<double>(x.size());
    if (x.size() < 2 || x.size() != y.size()) throw std::invalid_argument("fit_line: need >= 2 paired points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    const double slope = (n * sxy - sx * sy) / den;
    return {slope, (sy - slope * sx) / n};
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// --- rate study -----------------------------------------------------------------------------

struct RateRow {
    std::size_t n = 0;
    std::size_t seeds_used = 0;
    double median_sup_w2 = 0.0;
    std::vector<double> per_seed;
};

struct RateTable {
    std::vector<RateRow> rows;
    /// Fit of log(error - floor) against log(1/sqrt(log N)).
    double slope_vs_inv_sqrt_log_n = 0.0;
    /// Fit of log(error - floor) against log(1/sqrt(N)).
    double slope_vs_inv_sqrt_n = 0.0;
    double floor = 0.0;

    bool strictly_decreasing() const {
        for (std::size_t k = 1; k < rows.size(); ++k)
            if (!(rows[k].median_sup_w2 < rows[k - 1].median_sup_w2)) return false;
        return true;
    }
    /// median error * sqrt(log N) for each row.
    std::vector<double> log_scaled() const {
        std::vector<double> out;
        for (const auto& r : rows) out.push_back(r.median_sup_w2 * std::sqrt(std::log(static_cast<double>(r.n))));
        return out;
    }
};

/// sup over snapshot times of W2(empirical, PDE density); snapshot grids must agree.
inline double sup_w2_against(const RunRecord& rec, const FpeRun& pde) {
    if (rec.snapshot_times.size() != pde.snapshots.size())
        throw std::invalid_argument("rate_study: snapshot grids of particle and PDE runs differ");
    double sup = 0.0;
    for (std::size_t k = 0; k < rec.snapshot_times.size(); ++k) {
        if (std::abs(rec.snapshot_times[k] - pde.snapshots[k].t) > 1e-9)
            throw std::invalid_argument("rate_study: snapshot times of particle and PDE runs differ");
        sup = std::max(sup, w2_empirical_density(EmpiricalMeasure::from_sorted(rec.marginals[k]), pde.snapshots[k]));
    }
    return sup;
}

/// runs[s][k]: seed s, k-th particle count (coupled sweep). floor: estimated PDE
/// discretization error, removed before the fits.
inline RateTable rate_study(const std::vector<std::vector<RunRecord>>& runs, const FpeRun& pde, double floor = 0.0) {
    if (runs.empty() || runs.front().empty()) throw std::invalid_argument("rate_study: no runs");
    const std::size_t levels = runs.front().size();
    RateTable table;
    table.floor = floor;
    for (std::size_t k = 0; k < levels; ++k) {
        RateRow row;
        row.n = runs.front()[k].n_particles;
        for (const auto& seed_runs : runs) {
            if (seed_runs.size() != levels || seed_runs[k].n_particles != row.n)
                throw std::invalid_argument("rate_study: seeds disagree on the N sweep");
            row.per_seed.push_back(sup_w2_against(seed_runs[k], pde));
        }
        row.seeds_used = row.per_seed.size();
        row.median_sup_w2 = median(row.per_seed);
        if (!table.rows.empty() && !(row.n > table.rows.back().n))
            throw std::invalid_argument("rate_study: N must increase across rows");
        table.rows.push_back(std::move(row));
    }
    if (table.rows.size() >= 2) {
        std::vector<double> xl, xs, y;
        for (const auto& r : table.rows) {
            const double n = static_cast<double>(r.n);
            xl.push_back(std::log(1.0 / std::sqrt(std::log(n))));
            xs.push_back(std::log(1.0 / std::sqrt(n)));
            y.push_back(std::log(std::max(r.median_sup_w2 - floor, 1e-300)));
        }
        table.slope_vs_inv_sqrt_log_n = fit_line(xl, y).slope;
        table.slope_vs_inv_sqrt_n = fit_line(xs, y).slope;
    }
    return table;
}

// --- BV and Hoelder statistics ----------------------------------------------------------------

struct HolderRow {
    double beta = 0.0;
    /// max over dyadic pairs of mean_i |X_t - X_s|^4 / |t - s|^{4 beta}
    double max_quotient = 0.0;
    /// same, per dyadic level (gap = 2^level snapshot intervals)
    std::vector<double> per_level;
};

struct BvHolderReport {
    double mean_ktv = 0.0;
    double max_ktv = 0.0;
    std::vector<HolderRow> holder;
};

inline BvHolderReport bv_holder_report(const RunRecord& rec, std::vector<double> betas = {0.125, 0.25, 0.5}) {
    if (rec.snapshot_times.size() < 2) throw std::invalid_argument("bv_holder_report: need >= 2 snapshots");
    BvHolderReport rep;
    rep.mean_ktv = rec.k_tv_summary.back().first;
    rep.max_ktv = rec.k_tv_summary.back().second;
    const std::size_t s = rec.snapshot_times.size();
    const bool paths = rec.positions.size() == s;
    for (double beta : betas) {
        HolderRow row{beta, 0.0, {}};
        if (paths) {
            for (std::size_t gap = 1; gap < s; gap *= 2) {
                double level_max = 0.0;
                for (std::size_t a = 0; a + gap < s; a += gap) {
                    const auto& xa = rec.positions[a];
                    const auto& xb = rec.positions[a + gap];
                    double m4 = 0.0;
                    for (std::size_t i = 0; i < xa.size(); ++i) {
                        const double d = xb[i] - xa[i];
                        m4 += d * d * d * d;
                    }
                    m4 /= static_cast<double>(xa.size());
                    const double h = rec.snapshot_times[a + gap] - rec.snapshot_times[a];
                    level_max = std::max(level_max, m4 / std::pow(h, 4.0 * beta));
                }
                row.per_level.push_back(level_max);
                row.max_quotient = std::max(row.max_quotient, level_max);
            }
        }
        rep.holder.push_back(std::move(row));
    }
    return rep;
}

// --- contraction --------------------------------------------------------------------------

struct ContractionResult {
    std::vector<double> times;
    /// (1/N) sum |X_t - Y_t|^2 after every step
    std::vector<double> curve;
    double c = 0.0;
    double slack = 1.5;
    std::size_t bound_violations = 0;
    std::size_t monotone_violations = 0;
    bool zero_drift = false;

    bool passed() const { return bound_violations == 0 && (!zero_drift || monotone_violations == 0); }
};

/// Relative round-off allowance used for step-to-step and bound comparisons.
inline constexpr double kContractionRoundoff = 1e-12;

/// Two ensembles driven by identical noise from different feasible starts.
inline ContractionResult contraction_test(const ProblemSpec& spec, double dt, std::uint64_t seed,
                                          std::vector<double> init_a, std::vector<double> init_b,
                                          double c_override = -1.0, int threads = 0) {
    spec.check();
    if (init_a.size() != init_b.size() || init_a.empty())
        throw std::invalid_argument("contraction_test: initial ensembles must be nonempty and equal size");
    const double q0 = spec.mean(0.0);
    for (const auto* v : {&init_a, &init_b}) {
        for (double x : *v)
            if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("contraction_test: initial data outside [0,1]");
        if (mean_residual(*v, q0) > 1e-9) throw std::domain_error("contraction_test: initial mean differs from q(0)");
    }

    ContractionResult res;
    res.zero_drift = spec.drift.name == "zero";
    res.c = c_override >= 0.0 ? c_override : (res.zero_drift ? 0.0 : validate_conditions(spec).measured_c_eps);

    SimOptions opts;
    opts.threads = threads;
    const ProjectedEuler stepper(spec, opts);
    auto a = ParticleEnsemble::from_positions(std::move(init_a), seed);
    auto b = ParticleEnsemble::from_positions(std::move(init_b), seed);
    auto dist = [&] {
        detail::CompensatedSum s;
        for (std::size_t i = 0; i < a.size(); ++i) s.add((a.x[i] - b.x[i]) * (a.x[i] - b.x[i]));
        return s.value() / static_cast<double>(a.size());
    };
    const auto segs = plan_segments({spec.horizon}, dt, spec.horizon);
    res.times.push_back(0.0);
    res.curve.push_back(dist());
    const double d0 = res.curve.front();
    for (std::size_t j = 0; j < segs.front().steps; ++j) {
        const double t_next = j + 1 == segs.front().steps ? spec.horizon : static_cast<double>(j + 1) * segs.front().dt;
        stepper.advance(a, t_next);
        stepper.advance(b, t_next);
        const double d = dist();
        if (d > res.curve.back() * (1.0 + kContractionRoundoff)) ++res.monotone_violations;
        if (d > std::exp(2.0 * res.slack * res.c * t_next) * d0 * (1.0 + kContractionRoundoff)) ++res.bound_violations;
        res.times.push_back(t_next);
        res.curve.push_back(d);
    }
    return res;
}

}  // namespace rmv
