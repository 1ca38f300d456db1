#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rmv/config.hpp"
#include "rmv/fokker_planck.hpp"
#include "rmv/metrics.hpp"

using namespace rmv;

namespace {

DensityGrid bump(std::size_t cells, double lo, double hi) {
    std::vector<double> m(cells, 0.0);
    std::size_t hot = 0;
    for (std::size_t j = 0; j < cells; ++j) {
        const double x = (j + 0.5) / static_cast<double>(cells);
        if (x > lo && x < hi) {
            m[j] = 1.0;
            ++hot;
        }
    }
    for (double& v : m) v /= static_cast<double>(hot);
    return DensityGrid::from_masses(m);
}

double l1_to_uniform(const DensityGrid& g) {
    double s = 0.0;
    for (double v : g.u) s += std::abs(v - 1.0);
    return s * g.dx();
}

EmpiricalMeasure uniform_midpoints(std::size_t n) {
    std::vector<double> s(n);
    for (std::size_t k = 0; k < n; ++k) s[k] = (k + 0.5) / static_cast<double>(n);
    return EmpiricalMeasure::from_sorted(s);
}

const auto zero_mu = [](double) { return 0.0; };

}  // namespace

TEST(Kdot, Examples) {
    const auto uni = DensityGrid::uniform(50);
    EXPECT_EQ(kdot_from_density(uni, 0.0, zero_mu, 1.0), 0.0);
    EXPECT_NEAR(kdot_from_density(uni, 0.2, zero_mu, 1.0), 0.2, 1e-15);

    DensityGrid lin;
    lin.u.resize(64);
    for (std::size_t j = 0; j < 64; ++j) lin.u[j] = 0.5 + (j + 0.5) / 64.0;
    const auto [u0, u1] = boundary_values(lin);
    EXPECT_NEAR(u0, 0.5, 1e-14);
    EXPECT_NEAR(u1, 1.5, 1e-14);
    EXPECT_NEAR(kdot_from_density(lin, 0.0, zero_mu, 1.0), 0.5, 1e-14);
    EXPECT_THROW(boundary_values(DensityGrid::uniform(2)), std::invalid_argument);
}

TEST(Tridiagonal, MatchesDirectMultiply) {
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    const std::size_t n = 30;
    std::vector<double> a(n), b(n), c(n), x(n), rhs(n);
    for (std::size_t j = 0; j < n; ++j) {
        a[j] = -u(gen);
        c[j] = -u(gen);
        b[j] = 3.0 + u(gen);
        x[j] = u(gen);
    }
    for (std::size_t j = 0; j < n; ++j)
        rhs[j] = b[j] * x[j] + (j > 0 ? a[j] * x[j - 1] : 0.0) + (j + 1 < n ? c[j] * x[j + 1] : 0.0);
    solve_tridiagonal(a, b, c, rhs);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(rhs[j], x[j], 1e-13);
}

// u = 1 with Kdot = 0 solves the equation: zero advective and diffusive flux everywhere.
TEST(Fpe, UniformIsStationary) {
    const auto spec = problem_from_json(prototype_config()).spec;
    auto g = DensityGrid::uniform(200);
    for (int k = 0; k < 1000; ++k) g = fpe_step(g, 1e-3, spec.drift.mu_eps, 1.0, 0.0);
    for (double v : g.u) EXPECT_NEAR(v, 1.0, 1e-12);

    const auto run = solve_fpe(spec, 200, 1e-3, uniform_times(1.0, 10));
    for (const auto& s : run.snapshots)
        for (double v : s.u) EXPECT_NEAR(v, 1.0, 1e-10);
}

TEST(Fpe, MassConservedAndPositive) {
    const auto spec = problem_from_json(battery_config()).spec;
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> m(150);
    double total = 0.0;
    for (double& v : m) total += (v = u(gen));
    for (double& v : m) v /= total;
    auto g = DensityGrid::from_masses(m);
    const double m0 = g.mass();
    const FpeStepper stepper(150, spec.drift.mu_eps, spec.sigma);
    for (int k = 0; k < 2000; ++k) {
        const double kd = stepper.kdot(g, 0.4);
        stepper.step(g, std::min(1e-3, stepper.max_dt(kd)), kd);
        ASSERT_NEAR(g.mass(), m0, 1e-12);
    }
    for (double v : g.u) EXPECT_GE(v, 0.0);
}

TEST(Fpe, PureTransportTracksTheMean) {
    const FpeStepper stepper(200, zero_mu, 0.0);
    auto g = bump(200, 0.45, 0.55);
    const double dt = 1e-3;
    for (int k = 0; k < 1000; ++k) {
        const double kd = stepper.kdot(g, 0.1);
        EXPECT_NEAR(kd, 0.1, 1e-12);
        stepper.step(g, dt, kd);
        EXPECT_NEAR(g.moment(), 0.5 + 0.1 * g.t, 1.0 / 200.0);
    }
}

TEST(Fpe, RelaxesTowardUniform) {
    const auto spec = problem_from_json(prototype_config()).spec;
    const FpeStepper stepper(200, spec.drift.mu_eps, 1.0);
    auto g = bump(200, 0.3, 0.7);
    const auto ref = uniform_midpoints(4000);
    double prev = w2_empirical_density(ref, g);
    for (int horizon = 0; horizon < 4; ++horizon) {
        for (int k = 0; k < 50; ++k) stepper.step(g, 1e-3, stepper.kdot(g, 0.0));
        const double d = w2_empirical_density(ref, g);
        EXPECT_LT(d, prev);
        prev = d;
    }
}

TEST(Fpe, FirstOrderSelfConvergence) {
    const auto spec = problem_from_json(battery_config()).spec;
    const std::vector<double> times{0.5};
    const auto c = solve_fpe(spec, 100, 4e-4, times).snapshots.back();
    const auto m = solve_fpe(spec, 200, 2e-4, times).snapshots.back();
    const auto f = solve_fpe(spec, 400, 1e-4, times).snapshots.back();
    auto coarsen = [](const DensityGrid& g) {
        DensityGrid h;
        for (std::size_t j = 0; j + 1 < g.u.size(); j += 2) h.u.push_back(0.5 * (g.u[j] + g.u[j + 1]));
        return h;
    };
    auto l1 = [](const DensityGrid& a, const DensityGrid& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.u.size(); ++j) s += std::abs(a.u[j] - b.u[j]);
        return s * a.dx();
    };
    const double e1 = l1(c, coarsen(m));
    const double e2 = l1(coarsen(m), coarsen(coarsen(f)));
    EXPECT_GE(e1 / e2, 1.8) << "e1=" << e1 << " e2=" << e2;
}

TEST(Fpe, CflViolationNamesTheStep) {
    const FpeStepper stepper(100, [](double x) { return 50.0 * (x - 0.5); }, 1.0);
    auto g = DensityGrid::uniform(100);
    try {
        stepper.step(g, 0.01, 0.0);
        FAIL() << "expected CflError";
    } catch (const CflError& e) {
        EXPECT_LT(e.required_dt(), 0.01);
        EXPECT_NE(std::string(e.what()).find("dt <="), std::string::npos);
    }
}

TEST(Neumann, ZeroDriftRelaxesToUniform) {
    const auto g0 = bump(200, 0.1, 0.3);
    std::vector<double> m0(200);
    for (std::size_t j = 0; j < 200; ++j) m0[j] = g0.u[j] * g0.dx();
    const auto run = solve_neumann_fpe(zero_mu, 1.0, 200, 1e-3, m0, {2.0}, 2.0);
    EXPECT_LT(l1_to_uniform(run.snapshots.back()), 1e-3);
    EXPECT_LE(run.max_mass_drift(), 1e-12);
}

TEST(Neumann, InwardDriftConcentrates) {
    const std::vector<double> m0(200, 1.0 / 200.0);
    const auto run = solve_neumann_fpe([](double x) { return x - 0.5; }, 1.0, 200, 1e-3, m0, {2.0}, 2.0);
    const auto& g = run.snapshots.back();
    const double mean = integrate_against(g, [](double x) { return x; });
    const double var = integrate_against(g, [&](double x) { return (x - mean) * (x - mean); });
    EXPECT_NEAR(mean, 0.5, 1e-12);
    EXPECT_LT(var, 1.0 / 12.0);
}
