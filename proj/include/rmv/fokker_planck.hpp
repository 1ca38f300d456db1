#pragma once

// Finite-volume solver for the nonlinear nonlocal Fokker-Planck equation
//
//   u_t + [(-mu(x) + Kdot(t)) u]_x = (sigma^2/2) u_xx   on (0,1),
//   zero total flux at x = 0 and x = 1,
//   Kdot = qdot + int mu u dx + (sigma^2/2)(u(1) - u(0)),
//
// with explicit upwind advection, implicit diffusion (tridiagonal solve), and
// Kdot frozen at the start of each step. Setting Kdot = 0 gives the plain
// reflected-diffusion (Neumann) equation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rmv/model.hpp"
#include "rmv/projection.hpp"
#include "rmv/schedule.hpp"

namespace rmv {

struct DensityGrid {
    std::vector<double> u;
    double t = 0.0;
    double Kdot = 0.0;

    std::size_t cells() const noexcept { return u.size(); }
    double dx() const noexcept { return 1.0 / static_cast<double>(u.size()); }
    double center(std::size_t j) const noexcept { return (static_cast<double>(j) + 0.5) * dx(); }

    double mass() const {
        detail::CompensatedSum s;
        for (double v : u) s.add(v);
        return s.value() * dx();
    }
    double moment() const {
        detail::CompensatedSum s;
        for (std::size_t j = 0; j < u.size(); ++j) s.add(center(j) * u[j]);
        return s.value() * dx();
    }

    static DensityGrid uniform(std::size_t cells) { return {std::vector<double>(cells, 1.0), 0.0, 0.0}; }

    static DensityGrid from_masses(std::span<const double> masses) {
        DensityGrid g;
        g.u.resize(masses.size());
        const double m = static_cast<double>(masses.size());
        for (std::size_t j = 0; j < masses.size(); ++j) g.u[j] = masses[j] * m;
        return g;
    }
};

class CflError : public std::runtime_error {
public:
    CflError(double max_speed, double required_dt)
        : std::runtime_error("CFL violated: |v|max=" + std::to_string(max_speed) +
                             " requires dt <= " + std::to_string(required_dt)),
          required_dt_{required_dt} {}
    double required_dt() const noexcept { return required_dt_; }

private:
    double required_dt_;
};

inline constexpr double kCflLimit = 0.9;

/// One-sided quadratic extrapolation of the cell averages to the walls
/// (exact for linear profiles).
inline std::pair<double, double> boundary_values(const DensityGrid& g) {
    const auto& u = g.u;
    const std::size_t m = u.size();
    if (m < 3) throw std::invalid_argument("density grid needs at least 3 cells");
    const double left = (15.0 * u[0] - 10.0 * u[1] + 3.0 * u[2]) / 8.0;
    const double right = (15.0 * u[m - 1] - 10.0 * u[m - 2] + 3.0 * u[m - 3]) / 8.0;
    return {left, right};
}

template <typename Drift>
double kdot_from_density(const DensityGrid& g, double qdot, const Drift& mu, double sigma) {
    detail::CompensatedSum s;
    for (std::size_t j = 0; j < g.cells(); ++j) s.add(mu(g.center(j)) * g.u[j]);
    const auto [u0, u1] = boundary_values(g);
    return qdot + s.value() * g.dx() + 0.5 * sigma * sigma * (u1 - u0);
}

/// Thomas algorithm for a tridiagonal system; sub/sup have size n (first/last unused).
inline void solve_tridiagonal(std::span<const double> sub, std::span<const double> diag,
                              std::span<const double> sup, std::span<double> rhs) {
    const std::size_t n = diag.size();
    std::vector<double> c(n);
    double beta = diag[0];
    rhs[0] /= beta;
    for (std::size_t j = 1; j < n; ++j) {
        c[j] = sup[j - 1] / beta;
        beta = diag[j] - sub[j] * c[j];
        rhs[j] = (rhs[j] - sub[j] * rhs[j - 1]) / beta;
    }
    for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= c[j + 1] * rhs[j + 1];
}

struct FpeOptions {
    /// Kdot = 0 throughout (reflected diffusion without interaction).
    bool neumann = false;
    /// Add kappa (q - moment)/dt to Kdot.
    bool moment_correct = false;
    double kappa = 1.0;
};

/// Fixed-grid stepper; caches drift samples at faces and centers.
class FpeStepper {
public:
    template <typename Drift>
    FpeStepper(std::size_t cells, const Drift& mu, double sigma)
        : m_{cells}, sigma_{sigma}, mu_face_(cells + 1, 0.0), mu_center_(cells) {
        if (cells < 3) throw std::invalid_argument("density grid needs at least 3 cells");
        const double dx = 1.0 / static_cast<double>(cells);
        for (std::size_t f = 1; f < cells; ++f) mu_face_[f] = mu(static_cast<double>(f) * dx);
        for (std::size_t j = 0; j < cells; ++j) mu_center_[j] = mu((static_cast<double>(j) + 0.5) * dx);
    }

    double kdot(const DensityGrid& g, double qdot) const {
        detail::CompensatedSum s;
        for (std::size_t j = 0; j < m_; ++j) s.add(mu_center_[j] * g.u[j]);
        const auto [u0, u1] = boundary_values(g);
        return qdot + s.value() * g.dx() + 0.5 * sigma_ * sigma_ * (u1 - u0);
    }

    /// Largest stable step for the given Kdot.
    double max_dt(double kdot) const {
        double vmax = 0.0;
        for (std::size_t f = 1; f < m_; ++f) vmax = std::max(vmax, std::abs(-mu_face_[f] + kdot));
        const double dx = 1.0 / static_cast<double>(m_);
        return vmax > 0.0 ? kCflLimit * dx / vmax : std::numeric_limits<double>::infinity();
    }

    /// Advance g by dt with a given Kdot.
    void step(DensityGrid& g, double dt, double kdot) const {
        const double dx = 1.0 / static_cast<double>(m_);
        double vmax = 0.0;
        flux_.assign(m_ + 1, 0.0);
        for (std::size_t f = 1; f < m_; ++f) {
            const double v = -mu_face_[f] + kdot;
            vmax = std::max(vmax, std::abs(v));
            flux_[f] = v * (v > 0.0 ? g.u[f - 1] : g.u[f]);
        }
        if (vmax * dt / dx > kCflLimit * (1.0 + 1e-12)) throw CflError(vmax, kCflLimit * dx / vmax);

        // Solve for the increment: (I - r L) delta = -dt/dx (F_{j+1} - F_j) + r L u.
        // A state the operator leaves fixed then stays fixed to the last bit.
        const double r = 0.5 * sigma_ * sigma_ * dt / (dx * dx);
        rhs_.resize(m_);
        for (std::size_t j = 0; j < m_; ++j) {
            const double left = j > 0 ? g.u[j - 1] - g.u[j] : 0.0;
            const double right = j + 1 < m_ ? g.u[j + 1] - g.u[j] : 0.0;
            rhs_[j] = -dt / dx * (flux_[j + 1] - flux_[j]) + r * (left + right);
        }
        if (r > 0.0) {
            sub_.assign(m_, -r);
            sup_.assign(m_, -r);
            diag_.assign(m_, 1.0 + 2.0 * r);
            diag_.front() = 1.0 + r;
            diag_.back() = 1.0 + r;
            solve_tridiagonal(sub_, diag_, sup_, rhs_);
        }
        for (std::size_t j = 0; j < m_; ++j) rhs_[j] += g.u[j];
        g.u.swap(rhs_);
        g.t += dt;
        g.Kdot = kdot;
    }

    std::size_t cells() const noexcept { return m_; }

private:
    std::size_t m_;
    double sigma_;
    std::vector<double> mu_face_, mu_center_;
    mutable std::vector<double> flux_, rhs_, sub_, sup_, diag_;
};

/// Single step with Kdot evaluated from the current density.
template <typename Drift>
DensityGrid fpe_step(DensityGrid g, double dt, const Drift& mu, double sigma, double qdot) {
    const FpeStepper stepper(g.cells(), mu, sigma);
    stepper.step(g, dt, stepper.kdot(g, qdot));
    return g;
}

struct FpeDiagnostic {
    double t = 0.0;
    double mass = 0.0;
    double moment = 0.0;
    double Kdot = 0.0;
    /// |moment - q(t)|
    double residual = 0.0;
};

struct FpeRun {
    std::vector<DensityGrid> snapshots;
    std::vector<FpeDiagnostic> diagnostics;
    std::vector<TimeSegment> segments;

    double max_moment_residual() const {
        double m = 0.0;
        for (const auto& d : diagnostics) m = std::max(m, d.residual);
        return m;
    }
    double max_mass_drift() const {
        double m = 0.0;
        for (const auto& d : diagnostics) m = std::max(m, std::abs(d.mass - 1.0));
        return m;
    }
};

namespace detail {

inline FpeRun run_fpe(const FpeStepper& stepper, DensityGrid g, double dt, const std::vector<double>& snapshot_times,
                      double horizon, const std::function<double(double)>& q,
                      const std::function<double(double)>& qdot, const FpeOptions& opts) {
    FpeRun run;
    run.segments = plan_segments(snapshot_times, dt, horizon);
    auto diag = [&](const DensityGrid& s) {
        const double mom = s.moment();
        run.diagnostics.push_back({s.t, s.mass(), mom, s.Kdot, opts.neumann ? 0.0 : std::abs(mom - q(s.t))});
    };
    g.Kdot = opts.neumann ? 0.0 : stepper.kdot(g, qdot(g.t));
    diag(g);
    for (const auto& seg : run.segments) {
        for (std::size_t j = 0; j < seg.steps; ++j) {
            const double t_next = j + 1 == seg.steps ? seg.t1 : seg.t0 + static_cast<double>(j + 1) * seg.dt;
            const double h = t_next - g.t;
            double kd = 0.0;
            if (!opts.neumann) {
                kd = stepper.kdot(g, qdot(g.t));
                if (opts.moment_correct) kd += opts.kappa * (q(g.t) - g.moment()) / h;
            }
            stepper.step(g, h, kd);
            g.t = t_next;
            diag(g);
        }
        run.snapshots.push_back(g);
    }
    return run;
}

}  // namespace detail

/// Interacting equation; the initial density is the recentered initial law.
inline FpeRun solve_fpe(const ProblemSpec& spec, std::size_t cells, double dt,
                        const std::vector<double>& snapshot_times, FpeOptions opts = {}) {
    spec.check();
    opts.neumann = false;
    const auto masses = initial_cell_masses(spec.initial, spec.mean(0.0), cells);
    const FpeStepper stepper(cells, spec.drift.mu_eps, spec.sigma);
    const MeanSchedule& q = spec.mean;
    return detail::run_fpe(stepper, DensityGrid::from_masses(masses), dt, snapshot_times, spec.horizon,
                           [&q](double t) { return q(t); }, [&q](double t) { return q.rate(t); }, opts);
}

/// Reflected diffusion with drift b = -mu and no interaction (Kdot = 0).
template <typename Drift>
FpeRun solve_neumann_fpe(const Drift& mu, double sigma, std::size_t cells, double dt, std::span<const double> u0_masses,
                         const std::vector<double>& snapshot_times, double horizon) {
    if (u0_masses.size() != cells) throw std::invalid_argument("solve_neumann_fpe: initial masses must match cells");
    FpeOptions opts;
    opts.neumann = true;
    const FpeStepper stepper(cells, mu, sigma);
    return detail::run_fpe(stepper, DensityGrid::from_masses(u0_masses), dt, snapshot_times, horizon,
                           [](double) { return 0.0; }, [](double) { return 0.0; }, opts);
}

/// <u, psi> by midpoint quadrature on the cells.
template <typename F>
double integrate_against(const DensityGrid& g, const F& psi) {
    detail::CompensatedSum s;
    for (std::size_t j = 0; j < g.cells(); ++j) s.add(psi(g.center(j)) * g.u[j]);
    return s.value() * g.dx();
}

}  // namespace rmv
