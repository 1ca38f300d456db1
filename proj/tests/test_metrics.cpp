#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rmv/config.hpp"
#include "rmv/metrics.hpp"

using namespace rmv;

namespace {

std::vector<double> random_samples(std::mt19937_64& gen, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(n);
    for (double& v : s) v = u(gen);
    return s;
}

double w2(const std::vector<double>& a, const std::vector<double>& b) {
    return w2_empirical_empirical(EmpiricalMeasure::from_samples(a), EmpiricalMeasure::from_samples(b));
}

}  // namespace

TEST(W2, Examples) {
    EXPECT_EQ(w2({0.1, 0.7, 0.3}, {0.3, 0.1, 0.7}), 0.0);
    EXPECT_DOUBLE_EQ(w2({0.0, 0.0}, {1.0, 1.0}), 1.0);
    EXPECT_DOUBLE_EQ(w2({0.0, 1.0}, {0.5, 0.5}), 0.5);
    EXPECT_THROW(w2({}, {0.5}), std::invalid_argument);
    EXPECT_THROW(EmpiricalMeasure::from_sorted({0.5, 0.2}), std::invalid_argument);
    EXPECT_THROW(EmpiricalMeasure::from_samples({1.5}), std::domain_error);
}

TEST(W2, SortedCouplingIsOptimal) {
    std::mt19937_64 gen(4);
    for (std::size_t n = 1; n <= 6; ++n) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto a = random_samples(gen, n);
            const auto b = random_samples(gen, n);
            EXPECT_NEAR(w2(a, b), oracle::w2_by_permutations(a, b), 1e-14);
        }
    }
}

TEST(W2, MetricAxioms) {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 16;
        const auto a = random_samples(gen, n);
        const auto b = random_samples(gen, n);
        const auto c = random_samples(gen, n);
        EXPECT_EQ(w2(a, b), w2(b, a));
        EXPECT_EQ(w2(a, a), 0.0);
        if (a != b) {
            EXPECT_GT(w2(a, b), 0.0);
        }
        EXPECT_LE(w2(a, c), w2(a, b) + w2(b, c) + 1e-15);
    }
}

TEST(W2, UnequalCountsResampleToTheLarger) {
    // {0,1} spread to 4 points by its quantile interpolation
    const auto a = EmpiricalMeasure::from_samples({0.0, 1.0});
    const auto r = a.resampled(4);
    EXPECT_EQ(r.sorted_samples(), (std::vector<double>{0.0, 0.25, 0.75, 1.0}));
    const auto b = EmpiricalMeasure::from_samples({0.0, 0.25, 0.75, 1.0});
    EXPECT_EQ(w2_empirical_empirical(a, b), 0.0);
    EXPECT_EQ(w2_empirical_empirical(b, a), 0.0);
}

TEST(W2Density, UniformMidpoints) {
    for (std::size_t n : {10u, 100u, 1000u}) {
        std::vector<double> s(n);
        for (std::size_t k = 0; k < n; ++k) s[k] = (k + 0.5) / static_cast<double>(n);
        EXPECT_LE(w2_empirical_density(EmpiricalMeasure::from_sorted(s), DensityGrid::uniform(64)),
                  1.0 / (2.0 * static_cast<double>(n)));
    }
}

TEST(W2Density, PointMassAgainstHotCell) {
    std::vector<double> m(101, 0.0);
    m[50] = 1.0;
    const auto g = DensityGrid::from_masses(m);
    const auto a = EmpiricalMeasure::from_sorted(std::vector<double>(40, 0.5));
    EXPECT_LE(w2_empirical_density(a, g), g.dx());
}

TEST(W2Density, HistogramLimitIsMonotone) {
    std::mt19937_64 gen(6);
    const auto a = EmpiricalMeasure::from_samples(random_samples(gen, 500));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m = 4; m <= 4096; m *= 2) {
        const double d = w2_empirical_density(a, histogram(a, m));
        EXPECT_LE(d, prev + 1e-15);
        prev = d;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(W2Density, RejectsUnnormalized) {
    auto g = DensityGrid::uniform(10);
    g.u[0] = 2.0;
    EXPECT_THROW(w2_empirical_density(EmpiricalMeasure::from_samples({0.5}), g), std::domain_error);
}

TEST(Fit, RecoversExactLine) {
    const std::vector<double> x{1, 2, 3, 4};
    const std::vector<double> y{3, 5, 7, 9};
    const auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

TEST(RateStudy, StructureAndDecrease) {
    const auto spec = problem_from_json(prototype_config()).spec;
    const auto times = uniform_times(1.0, 5);
    const auto pde = solve_fpe(spec, 200, 1e-3, times);
    std::vector<std::vector<RunRecord>> runs;
    for (std::uint64_t s = 0; s < 3; ++s) runs.push_back(simulate_coupled(spec, {100, 400, 1600}, 0.01, s, times));
    const auto table = rate_study(runs, pde);
    ASSERT_EQ(table.rows.size(), 3u);
    EXPECT_EQ(table.rows[0].n, 100u);
    EXPECT_EQ(table.rows[2].seeds_used, 3u);
    EXPECT_TRUE(table.strictly_decreasing());
    EXPECT_TRUE(std::isfinite(table.slope_vs_inv_sqrt_n));
    EXPECT_TRUE(std::isfinite(table.slope_vs_inv_sqrt_log_n));
    EXPECT_EQ(table.log_scaled().size(), 3u);
}

TEST(RateStudy, DeterministicCaseIsFlat) {
    // sigma = 0, zero drift, every particle at q: the error is the PDE floor for every N,
    // up to the O(1/n^2) midpoint quadrature term.
    auto j = prototype_config();
    j["sigma"] = 0.0;
    j["initial"] = {{"kind", "samples"}, {"params", {{"samples", {0.5}}}}};
    const auto spec = problem_from_json(j).spec;
    const auto times = uniform_times(1.0, 4);
    const auto pde = solve_fpe(spec, 101, 1e-2, times);
    std::vector<std::vector<RunRecord>> runs{simulate_coupled(spec, {10, 100, 1000}, 0.05, 1, times)};
    const auto table = rate_study(runs, pde);
    for (const auto& r : table.rows) EXPECT_NEAR(r.median_sup_w2, table.rows[0].median_sup_w2, 0.01 * table.rows[0].median_sup_w2);
}

TEST(RateStudy, MismatchedGridsRejected) {
    const auto spec = problem_from_json(prototype_config()).spec;
    const auto pde = solve_fpe(spec, 50, 1e-2, {0.5, 1.0});
    std::vector<std::vector<RunRecord>> runs{simulate_coupled(spec, {10}, 0.05, 1, {1.0})};
    EXPECT_THROW(rate_study(runs, pde), std::invalid_argument);
}

TEST(BvReport, DeterministicRunHasNoPush) {
    auto j = prototype_config();
    j["sigma"] = 0.0;
    const auto spec = problem_from_json(j).spec;
    const auto rep = bv_holder_report(simulate(spec, 100, 0.01, 1, uniform_times(1.0, 8)));
    EXPECT_EQ(rep.mean_ktv, 0.0);
    EXPECT_EQ(rep.max_ktv, 0.0);
    ASSERT_EQ(rep.holder.size(), 3u);
    EXPECT_EQ(rep.holder[0].beta, 0.125);
}

TEST(BvReport, NoisyRunIsPositiveAndFinite) {
    const auto spec = problem_from_json(prototype_config()).spec;
    const auto rep = bv_holder_report(simulate(spec, 500, 0.01, 1, uniform_times(1.0, 8)));
    EXPECT_GT(rep.mean_ktv, 0.0);
    EXPECT_TRUE(std::isfinite(rep.max_ktv));
    for (const auto& h : rep.holder) {
        EXPECT_EQ(h.per_level.size(), 4u);  // gaps 1, 2, 4, 8
        EXPECT_TRUE(std::isfinite(h.max_quotient));
    }
    EXPECT_THROW(bv_holder_report(simulate(spec, 5, 0.01, 1, {1.0})), std::invalid_argument);
}

TEST(ContractionCurve, IdenticalStartsStayIdentical) {
    auto spec = problem_from_json(prototype_config()).spec;
    spec.horizon = 0.1;
    const auto a = initial_positions(spec, 50, 3);
    const auto res = contraction_test(spec, 0.01, 9, a, a);
    for (double d : res.curve) EXPECT_EQ(d, 0.0);
    EXPECT_TRUE(res.passed());
    std::vector<double> bad(50, 0.9);
    EXPECT_THROW(contraction_test(spec, 0.01, 9, a, bad), std::domain_error);
}
