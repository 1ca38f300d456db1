#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rmv/config.hpp"
#include "rmv/metrics.hpp"
#include "rmv/particles.hpp"

using namespace rmv;

namespace {

ProblemSpec zero_spec(MeanSchedule q = MeanSchedule({0.0}, {0.5}, 0.25), double sigma = 1.0) {
    ProblemSpec s;
    s.mean = std::move(q);
    s.sigma = sigma;
    return s;
}

ProblemSpec battery() { return problem_from_json(battery_config()).spec; }

}  // namespace

TEST(Step, DeterministicShiftWithRisingMean) {
    const auto spec = zero_spec(MeanSchedule({0.0, 0.4}, {0.5, 0.9}, 0.05), 0.0);
    const ProjectedEuler stepper(spec);
    auto ens = ParticleEnsemble::from_positions({0.4, 0.6}, 1);
    const std::vector<double> dw{0.0, 0.0};
    const auto rep = stepper.step(ens, 0.1, dw);
    EXPECT_NEAR(ens.x[0], 0.5, 1e-15);
    EXPECT_NEAR(ens.x[1], 0.7, 1e-15);
    EXPECT_NEAR(rep.dK, 0.1, 1e-15);
    EXPECT_EQ(rep.dk, (std::vector<double>{0.0, 0.0}));
}

TEST(Step, InjectedNoiseMatchesOracleProjection) {
    const auto spec = battery();
    const ProjectedEuler stepper(spec);
    std::mt19937_64 gen(17);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x0{0.05 + 0.9 * std::uniform_real_distribution<>(0, 1)(gen), 0.0};
        x0[1] = 2.0 * spec.mean(0.0) - x0[0];
        if (x0[1] < 0.0 || x0[1] > 1.0) continue;
        auto ens = ParticleEnsemble::from_positions(x0, 3);
        const std::vector<double> dw{nd(gen), nd(gen)};
        stepper.step(ens, 0.01, dw);
        std::vector<double> y(2);
        for (int i = 0; i < 2; ++i) y[i] = x0[i] - spec.drift.mu_eps(x0[i]) * 0.01 + spec.sigma * dw[i];
        const auto ref = oracle::bisection_projection(y, spec.mean(0.01));
        EXPECT_NEAR(ens.x[0], ref[0], 1e-12);
        EXPECT_NEAR(ens.x[1], ref[1], 1e-12);
    }
}

TEST(Step, InteractionIdentityReconciles) {
    const auto spec = battery();
    const ProjectedEuler stepper(spec);
    auto ens = ParticleEnsemble::from_positions(initial_positions(spec, 2000, 5), 5);
    for (int k = 0; k < 200; ++k) {
        const auto r = stepper.step(ens, 0.005);
        const double rhs = r.drift_mean_dt + r.dq - spec.sigma * r.noise_mean + r.dk_mean;
        EXPECT_NEAR(r.dK, rhs, 1e-12);
        EXPECT_LE(r.residual, 1e-9);
    }
}

TEST(Step, SingleParticleFollowsTheMean) {
    const auto spec = zero_spec(MeanSchedule({0.0, 1.0}, {0.3, 0.7}, 0.25));
    const auto rec = simulate(spec, 1, 0.01, 11, uniform_times(1.0, 10));
    for (std::size_t k = 0; k < rec.snapshot_times.size(); ++k)
        EXPECT_NEAR(rec.marginals[k][0], spec.mean(rec.snapshot_times[k]), 1e-12);
}

TEST(Step, RejectsBadInput) {
    const auto spec = zero_spec();
    const ProjectedEuler stepper(spec);
    auto ens = ParticleEnsemble::from_positions({0.5, 0.5}, 1);
    EXPECT_THROW(stepper.step(ens, 0.0), std::invalid_argument);
    const std::vector<double> wrong{0.1};
    EXPECT_THROW(stepper.step(ens, 0.1, wrong), std::invalid_argument);
    EXPECT_THROW(simulate(spec, 0, 0.1, 1, {1.0}), std::invalid_argument);
    EXPECT_THROW(simulate_coupled(spec, {100, 100}, 0.1, 1, {1.0}), std::invalid_argument);
}

TEST(Simulate, ConstraintHeldAtEveryStep) {
    const auto rec = simulate(battery(), 3000, 0.002, 21, uniform_times(1.5, 6));
    EXPECT_EQ(rec.constraint_residuals.size(), rec.total_steps);
    EXPECT_LE(rec.max_residual(), 1e-9);
    for (const auto& m : rec.marginals) {
        EXPECT_GE(m.front(), 0.0);
        EXPECT_LE(m.back(), 1.0);
    }
}

TEST(Simulate, SnapshotsAlignWithIrregularTimes) {
    const std::vector<double> times{0.0, 0.0123, 0.5, 0.777, 1.0};
    const auto rec = simulate(zero_spec(), 50, 0.01, 2, times);
    ASSERT_EQ(rec.snapshot_times.size(), times.size());
    for (std::size_t k = 0; k < times.size(); ++k) EXPECT_NEAR(rec.snapshot_times[k], times[k], 1e-12);
}

TEST(Coupling, InitialDrawsSharedAcrossN) {
    const auto spec = battery();
    const auto a = initial_positions(spec, 100, 9, false);
    const auto b = initial_positions(spec, 1000, 9, false);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Coupling, NoiseSharedAcrossN) {
    // Without interaction the first particles' paths depend only on their own streams.
    const auto spec = battery();
    SimOptions o;
    o.keep_positions = true;
    const auto small = simulate_no_interaction(spec, 50, 0.01, 4, {0.5, 1.0}, o);
    const auto large = simulate_no_interaction(spec, 400, 0.01, 4, {0.5, 1.0}, o);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(small.positions[k][i], large.positions[k][i]);
}

TEST(Determinism, IndependentOfThreadCount) {
    const auto spec = battery();
    SimOptions one, many;
    one.threads = 1;
    many.threads = 4;
    const auto a = simulate(spec, 5000, 0.01, 77, uniform_times(1.5, 3), one);
    const auto b = simulate(spec, 5000, 0.01, 77, uniform_times(1.5, 3), many);
    EXPECT_EQ(a.marginals, b.marginals);
    EXPECT_EQ(a.K_path, b.K_path);
    EXPECT_EQ(a.k_tv_final, b.k_tv_final);
}

TEST(NoInteraction, SymmetricStartStaysSymmetricInLaw) {
    // Zero drift, q irrelevant: reflected Brownian motions from the uniform law stay uniform.
    const auto rec = simulate_no_interaction(zero_spec(), 20000, 0.001, 8, {0.5});
    double m = 0.0;
    for (double v : rec.marginals[0]) m += v;
    m /= 20000.0;
    EXPECT_NEAR(m, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / 20000.0) + 0.01);
}

TEST(Contraction, ZeroDriftDistanceNonIncreasing) {
    auto spec = zero_spec();
    spec.horizon = 0.5;
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> a(500), b(500);
    for (auto& v : a) v = u(gen);
    for (auto& v : b) v = u(gen) * u(gen);
    a = recenter_initial(a, 0.5);
    b = recenter_initial(b, 0.5);
    const auto res = contraction_test(spec, 0.001, 12, a, b);
    EXPECT_TRUE(res.passed());
    EXPECT_EQ(res.monotone_violations, 0u);
    EXPECT_LT(res.curve.back(), res.curve.front());
}

// The step is a projection, so the discrete map is non-expansive before the drift.
TEST(Contraction, BatteryWithinExponentialBound) {
    auto spec = battery();
    spec.horizon = 0.3;
    const auto a = initial_positions(spec, 400, 1);
    const auto b = initial_positions(spec, 400, 2);
    const auto res = contraction_test(spec, 0.001, 13, a, b);
    EXPECT_TRUE(res.passed()) << "bound violations " << res.bound_violations;
    EXPECT_GT(res.c, 0.0);
}

TEST(Holder, QuotientsStableUnderStepRefinement) {
    const auto spec = battery();
    const auto times = uniform_times(1.0, 32);
    SimOptions o;
    o.keep_positions = true;
    const auto coarse = bv_holder_report(simulate(spec, 2000, 0.004, 6, times, o));
    const auto fine = bv_holder_report(simulate(spec, 2000, 0.001, 6, times, o));
    for (std::size_t b = 0; b < coarse.holder.size(); ++b) {
        ASSERT_GT(coarse.holder[b].max_quotient, 0.0);
        EXPECT_LT(fine.holder[b].max_quotient, 4.0 * coarse.holder[b].max_quotient);
    }
    EXPECT_GT(fine.mean_ktv, 0.0);
    EXPECT_GE(fine.max_ktv, fine.mean_ktv);
}
