#pragma once

// Problem data: drift and its boundary regularization, the prescribed mean
// schedule, noise intensity, initial law, and grid checks of the standing
// assumptions on these objects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rmv/projection.hpp"
#include "rmv/rng.hpp"

namespace rmv {

/// A scalar function on (0,1), optionally with analytic first and second derivatives.
/// Missing derivatives fall back to central differences.
struct ScalarFunction {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;

    double operator()(double x) const { return f(x); }

    double derivative(double x, double h = 1e-5) const {
        if (df) return df(x);
        return (f(x + h) - f(x - h)) / (2.0 * h);
    }
    double second_derivative(double x, double h = 1e-4) const {
        if (d2f) return d2f(x);
        return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    }
};

/// mu(x) = theta log(x/(1-x)) + a (x - 1/2)
inline ScalarFunction double_well_log(double theta, double a) {
    if (theta == 0.0) {
        return {[a](double x) { return a * (x - 0.5); }, [a](double) { return a; },
                [](double) { return 0.0; }};
    }
    return {[theta, a](double x) { return theta * std::log(x / (1.0 - x)) + a * (x - 0.5); },
            [theta, a](double x) { return theta / (x * (1.0 - x)) + a; },
            [theta](double x) { return theta * (1.0 / ((1.0 - x) * (1.0 - x)) - 1.0 / (x * x)); }};
}

inline ScalarFunction zero_drift() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; }};
}

/// Piecewise-linear interpolation of tabulated samples (x strictly increasing).
inline ScalarFunction tabulated_drift(std::vector<double> xs, std::vector<double> mus) {
    if (xs.size() < 2 || xs.size() != mus.size())
        throw std::invalid_argument("tabulated drift: need >= 2 (x, mu) pairs of equal length");
    for (std::size_t k = 1; k < xs.size(); ++k)
        if (!(xs[k] > xs[k - 1])) throw std::invalid_argument("tabulated drift: x must be increasing");
    auto data = std::make_shared<std::pair<std::vector<double>, std::vector<double>>>(std::move(xs),
                                                                                       std::move(mus));
    return {[data](double x) {
        const auto& [px, pm] = *data;
        if (x <= px.front()) return pm.front();
        if (x >= px.back()) return pm.back();
        const auto it = std::upper_bound(px.begin(), px.end(), x);
        const std::size_t k = static_cast<std::size_t>(it - px.begin());
        const double w = (x - px[k - 1]) / (px[k] - px[k - 1]);
        return (1.0 - w) * pm[k - 1] + w * pm[k];
    }, {}, {}};
}

/// C^2 boundary regularization: equal to mu on [eps, 1-eps]; on the boundary layers a
/// quintic Hermite blend from (0,0,0) at the wall to (mu, mu', mu'') at the layer edge,
/// clamped in magnitude by |mu|.
class RegularizedDrift {
public:
    RegularizedDrift() = default;

    RegularizedDrift(ScalarFunction mu, double eps) : mu_{std::move(mu)}, eps_{eps} {
        if (!(eps > 0.0 && eps < 0.5))
            throw std::domain_error("regularize: epsilon must lie in (0, 1/2)");
        const double a = eps;
        const double b = 1.0 - eps;
        // In the local coordinate s = dist/eps the layer edge is s = 1.
        left_ = {mu_(a), mu_.derivative(a) * eps, mu_.second_derivative(a) * eps * eps};
        right_ = {mu_(b), -mu_.derivative(b) * eps, mu_.second_derivative(b) * eps * eps};
    }

    double operator()(double x) const {
        if (x <= 0.0 || x >= 1.0) return 0.0;
        if (x >= eps_ && x <= 1.0 - eps_) return mu_(x);
        const bool left = x < eps_;
        const double s = left ? x / eps_ : (1.0 - x) / eps_;
        const double h = blend(left ? left_ : right_, s);
        const double cap = std::abs(mu_(x));
        return std::abs(h) > cap ? std::copysign(cap, h) : h;
    }

    double epsilon() const noexcept { return eps_; }
    const ScalarFunction& base() const noexcept { return mu_; }

private:
    struct Knot {
        double value, slope, curvature;
    };

    static double blend(const Knot& k, double s) {
        const double s3 = s * s * s;
        const double s4 = s3 * s;
        const double s5 = s4 * s;
        return k.value * (10.0 * s3 - 15.0 * s4 + 6.0 * s5) + k.slope * (-4.0 * s3 + 7.0 * s4 - 3.0 * s5) +
               k.curvature * (0.5 * s3 - s4 + 0.5 * s5);
    }

    ScalarFunction mu_;
    double eps_ = 0.25;
    Knot left_{}, right_{};
};

inline RegularizedDrift regularize(const ScalarFunction& mu, double epsilon) {
    return RegularizedDrift(mu, epsilon);
}

struct DriftModel {
    std::string name = "zero";
    ScalarFunction mu = zero_drift();
    double one_sided_lipschitz_c = 0.0;
    double sign_radius_rho = 0.25;
    double epsilon = 0.05;
    RegularizedDrift mu_eps = RegularizedDrift(zero_drift(), 0.05);

    static DriftModel make(std::string name, ScalarFunction mu, double c, double rho, double epsilon) {
        DriftModel d;
        d.name = std::move(name);
        d.mu = std::move(mu);
        d.one_sided_lipschitz_c = c;
        d.sign_radius_rho = rho;
        d.epsilon = epsilon;
        d.mu_eps = regularize(d.mu, epsilon);
        return d;
    }
};

/// Piecewise-linear mean target q(t), held constant outside the breakpoint range.
class MeanSchedule {
public:
    MeanSchedule() : MeanSchedule({0.0}, {0.5}, 0.25) {}

    MeanSchedule(std::vector<double> breakpoints, std::vector<double> values, double xi)
        : t_{std::move(breakpoints)}, q_{std::move(values)}, xi_{xi} {
        if (t_.empty() || t_.size() != q_.size())
            throw std::invalid_argument("mean schedule: breakpoints and values must be nonempty and equal length");
        for (std::size_t k = 1; k < t_.size(); ++k)
            if (!(t_[k] > t_[k - 1]))
                throw std::invalid_argument("mean schedule: breakpoints must be strictly increasing");
        if (!(xi > 0.0 && xi < 0.5)) throw std::domain_error("mean schedule: xi must lie in (0, 1/2)");
    }

    double operator()(double t) const {
        if (t <= t_.front()) return q_.front();
        if (t >= t_.back()) return q_.back();
        const std::size_t k = segment(t);
        const double w = (t - t_[k]) / (t_[k + 1] - t_[k]);
        return (1.0 - w) * q_[k] + w * q_[k + 1];
    }

    /// Right-derivative.
    double rate(double t) const {
        if (t_.size() < 2 || t < t_.front() || t >= t_.back()) return 0.0;
        const std::size_t k = segment(t);
        return (q_[k + 1] - q_[k]) / (t_[k + 1] - t_[k]);
    }

    double lipschitz() const {
        double L = 0.0;
        for (std::size_t k = 1; k < t_.size(); ++k)
            L = std::max(L, std::abs(q_[k] - q_[k - 1]) / (t_[k] - t_[k - 1]));
        return L;
    }

    const std::vector<double>& breakpoints() const noexcept { return t_; }
    const std::vector<double>& values() const noexcept { return q_; }
    double xi() const noexcept { return xi_; }

private:
    std::size_t segment(double t) const {
        const auto it = std::upper_bound(t_.begin(), t_.end(), t);
        return static_cast<std::size_t>(it - t_.begin()) - 1;
    }

    std::vector<double> t_, q_;
    double xi_;
};

// --- initial laws ------------------------------------------------------------------------

struct UniformLaw {};

/// Kumaraswamy(a, b): beta-like density a b x^{a-1} (1 - x^a)^{b-1} with closed-form quantile.
struct KumaraswamyLaw {
    double a = 1.0;
    double b = 1.0;
};

/// Explicit sample list; particle i uses samples[i mod size].
struct SampleListLaw {
    std::vector<double> samples;
};

using InitialLaw = std::variant<UniformLaw, KumaraswamyLaw, SampleListLaw>;

inline double law_cdf(const InitialLaw& law, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    return std::visit(
        [x](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, UniformLaw>) {
                return x;
            } else if constexpr (std::is_same_v<L, KumaraswamyLaw>) {
                return 1.0 - std::pow(1.0 - std::pow(x, l.a), l.b);
            } else {
                const auto n = static_cast<double>(l.samples.size());
                const auto c = std::count_if(l.samples.begin(), l.samples.end(),
                                             [x](double s) { return s <= x; });
                return static_cast<double>(c) / n;
            }
        },
        law);
}

/// Independent draw Y^i for particle i, a pure function of (seed, i).
inline double sample_initial(const InitialLaw& law, std::uint64_t seed, std::uint64_t i) {
    return std::visit(
        [&](const auto& l) -> double {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, SampleListLaw>) {
                return l.samples[i % l.samples.size()];
            } else {
                const double u = rng::CounterRng(seed).uniform2(rng::Domain::initial_sample, i, 0)[0];
                if constexpr (std::is_same_v<L, UniformLaw>)
                    return 1.0 - u;  // u in (0,1] -> [0,1)
                else
                    return std::pow(1.0 - std::pow(u, 1.0 / l.b), 1.0 / l.a);
            }
        },
        law);
}

inline void validate_law(const InitialLaw& law) {
    if (const auto* k = std::get_if<KumaraswamyLaw>(&law)) {
        if (!(k->a > 0.0 && k->b > 0.0)) throw std::domain_error("initial law: kumaraswamy needs a, b > 0");
    }
    if (const auto* s = std::get_if<SampleListLaw>(&law)) {
        if (s->samples.empty()) throw std::invalid_argument("initial law: empty sample list");
        for (double v : s->samples)
            if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error("initial law: samples must lie in [0,1]");
    }
}

struct ProblemSpec {
    DriftModel drift;
    MeanSchedule mean;
    double sigma = 1.0;
    double horizon = 1.0;
    InitialLaw initial = UniformLaw{};
    /// Seed for the initial draws; the run seed is used when absent.
    std::optional<std::uint64_t> initial_seed;

    void check() const {
        if (!(horizon > 0.0)) throw std::domain_error("problem: horizon must be positive");
        if (!(sigma >= 0.0)) throw std::domain_error("problem: sigma must be nonnegative");
        if (!(drift.sign_radius_rho > 0.0 && drift.sign_radius_rho < 0.5))
            throw std::domain_error("problem: rho must lie in (0, 1/2)");
        validate_law(initial);
    }
};

/// Shift to mean q0, then project back into the box when the shift leaves it.
inline std::vector<double> recenter_initial(std::span<const double> samples, double q0) {
    if (samples.empty()) throw std::invalid_argument("recenter_initial: empty sample set");
    if (!(q0 > 0.0 && q0 < 1.0)) throw std::domain_error("recenter_initial: q0 must lie in (0,1)");
    return project_constrained(samples, q0).x;
}

/// Shift lambda with E[clip(Y + lambda)] = q0: the large-N limit of recenter_initial.
inline double law_recenter_shift(const InitialLaw& law, double q0) {
    // E[clip(Y + l)] = int_0^1 (1 - F(s - l)) ds, evaluated with composite Simpson.
    auto mean_of = [&](double l) {
        constexpr int n = 4096;
        const double h = 1.0 / n;
        double acc = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
            acc += w * (1.0 - law_cdf(law, k * h - l));
        }
        return acc * h / 3.0;
    };
    if (std::abs(mean_of(0.0) - q0) < 1e-13) return 0.0;
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_of(mid) < q0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Probability mass of the law shifted by `shift` in each of M uniform cells; mass
/// pushed past 0 or 1 by the shift goes to the edge cells.
inline std::vector<double> law_cell_masses(const InitialLaw& law, std::size_t cells, double shift = 0.0) {
    std::vector<double> m(cells, 0.0);
    if (const auto* s = std::get_if<SampleListLaw>(&law)) {
        for (double v : s->samples) {
            const double x = std::clamp(v + shift, 0.0, 1.0);
            auto j = static_cast<std::size_t>(x * static_cast<double>(cells));
            m[std::min(j, cells - 1)] += 1.0 / static_cast<double>(s->samples.size());
        }
        return m;
    }
    const double dx = 1.0 / static_cast<double>(cells);
    for (std::size_t j = 0; j < cells; ++j) {
        const double a = static_cast<double>(j) * dx;
        const double b = static_cast<double>(j + 1) * dx;
        const double fa = j == 0 ? 0.0 : law_cdf(law, a - shift);
        const double fb = j + 1 == cells ? 1.0 : law_cdf(law, b - shift);
        m[j] = fb - fa;
    }
    return m;
}

/// Cell masses of the recentered initial law.
inline std::vector<double> initial_cell_masses(const InitialLaw& law, double q0, std::size_t cells) {
    if (const auto* s = std::get_if<SampleListLaw>(&law))
        return law_cell_masses(SampleListLaw{recenter_initial(s->samples, q0)}, cells);
    return law_cell_masses(law, cells, law_recenter_shift(law, q0));
}

// --- standing-assumption checks -------------------------------------------------------------

struct ConditionVerdict {
    std::string name;
    bool passed = false;
    std::string witness;
    double worst = 0.0;
};

struct ValidationReport {
    std::vector<ConditionVerdict> verdicts;
    /// One-sided Lipschitz constant of mu^eps measured on the grid.
    double measured_c_eps = 0.0;
    std::vector<std::string> notes;

    bool all_passed() const {
        return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.passed; });
    }
    const ConditionVerdict* find(const std::string& name) const {
        for (const auto& v : verdicts)
            if (v.name == name) return &v;
        return nullptr;
    }
};

/// sup of -(f(x)-f(y))/(x-y) over adjacent grid points; in 1-D this bounds every pair.
template <typename F>
double grid_one_sided_lipschitz(const F& f, std::span<const double> grid) {
    double c = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k)
        c = std::max(c, -(f(grid[k]) - f(grid[k - 1])) / (grid[k] - grid[k - 1]));
    return c;
}

/// Grid-sampled necessary checks; a pass is never a certificate.
inline ValidationReport validate_conditions(const ProblemSpec& spec, std::size_t grid_points = 4096) {
    if (grid_points < 3) throw std::invalid_argument("validate_conditions: grid_points must be >= 3");
    spec.check();
    const DriftModel& d = spec.drift;
    const double rho = d.sign_radius_rho;
    ValidationReport rep;

    std::vector<double> grid(grid_points);
    for (std::size_t k = 0; k < grid_points; ++k)
        grid[k] = (static_cast<double>(k) + 1.0) / (static_cast<double>(grid_points) + 1.0);

    {
        const double c = grid_one_sided_lipschitz(d.mu, grid);
        ConditionVerdict v{"drift_one_sided_lipschitz", c <= d.one_sided_lipschitz_c * (1.0 + 1e-9) + 1e-12,
                           "", c};
        if (!v.passed) v.witness = "measured c=" + std::to_string(c) + " > declared " +
                                   std::to_string(d.one_sided_lipschitz_c);
        rep.verdicts.push_back(v);
    }
    {
        // x|mu(x)| near 0 and (1-x)|mu(x)| near 1 along a dyadic approach to the walls.
        double head = 0.0, tail = 0.0;
        bool finite = true;
        for (int k = 1; k <= 50; ++k) {
            const double x = std::ldexp(1.0, -k);
            const double l = x * std::abs(d.mu(x));
            const double r = x * std::abs(d.mu(1.0 - x));
            if (!std::isfinite(l) || !std::isfinite(r)) {
                finite = false;
                continue;
            }
            (k <= 20 ? head : tail) = std::max(k <= 20 ? head : tail, std::max(l, r));
        }
        for (double x : grid) {
            const double w = x < 0.5 ? x : 1.0 - x;
            const double v = w * std::abs(d.mu(x));
            if (!std::isfinite(v))
                finite = false;
            else
                head = std::max(head, v);
        }
        ConditionVerdict v{"drift_boundary_growth", finite && tail <= 10.0 * (head + 1.0), "", tail};
        if (!v.passed) v.witness = "dist*|mu| grows toward the boundary (tail " + std::to_string(tail) + ")";
        rep.verdicts.push_back(v);
    }
    {
        ConditionVerdict v{"drift_sign_near_boundary", true, "", 0.0};
        for (double x : grid) {
            if (!(x < rho || x > 1.0 - rho)) continue;
            const double s = (x > 0.5 ? 1.0 : -1.0) * d.mu(x);
            if (s < 0.0 && s < v.worst) {
                v.passed = false;
                v.worst = s;
                v.witness = "sign(x-1/2) mu(x) < 0 at x=" + std::to_string(x);
            }
        }
        rep.verdicts.push_back(v);
    }
    {
        const RegularizedDrift& me = d.mu_eps;
        const double e0 = me(0.0), e1 = me(1.0);
        ConditionVerdict v{"regularized_endpoint_zero", e0 == 0.0 && e1 == 0.0, "", std::max(std::abs(e0), std::abs(e1))};
        if (!v.passed) v.witness = "mu_eps(0) or mu_eps(1) nonzero";
        rep.verdicts.push_back(v);

        ConditionVerdict dom{"regularized_dominated", true, "", 0.0};
        ConditionVerdict agree{"regularized_interior_agreement", true, "", 0.0};
        for (double x : grid) {
            const double a = std::abs(me(x)), b = std::abs(d.mu(x));
            if (a > b * (1.0 + 1e-12) + 1e-300) {
                dom.passed = false;
                dom.worst = std::max(dom.worst, a - b);
                dom.witness = "|mu_eps| > |mu| at x=" + std::to_string(x);
            }
            if (x >= d.epsilon && x <= 1.0 - d.epsilon && me(x) != d.mu(x)) {
                agree.passed = false;
                agree.witness = "mu_eps != mu at x=" + std::to_string(x);
            }
        }
        rep.verdicts.push_back(dom);
        rep.verdicts.push_back(agree);

        std::vector<double> full(grid_points + 2);
        full.front() = 0.0;
        std::copy(grid.begin(), grid.end(), full.begin() + 1);
        full.back() = 1.0;
        rep.measured_c_eps = grid_one_sided_lipschitz(me, full);
        rep.notes.push_back("endpoint condition mu(0)=mu(1)=0 is checked on mu_eps, not on mu");
    }
    {
        const auto& vals = spec.mean.values();
        const double xi = spec.mean.xi();
        ConditionVerdict v{"mean_bounds", true, "", 0.0};
        // Piecewise linear: extrema sit at breakpoints.
        for (std::size_t k = 0; k < vals.size(); ++k) {
            if (vals[k] < xi) {
                v.passed = false;
                v.witness = "q(t) < xi at t=" + std::to_string(spec.mean.breakpoints()[k]);
            } else if (vals[k] > 1.0 - xi) {
                v.passed = false;
                v.witness = "q(t) > 1-xi at t=" + std::to_string(spec.mean.breakpoints()[k]);
            }
        }
        rep.verdicts.push_back(v);
        const double L = spec.mean.lipschitz();
        rep.verdicts.push_back({"mean_lipschitz", std::isfinite(L), std::isfinite(L) ? "" : "infinite slope", L});
    }
    return rep;
}

}  // namespace rmv
