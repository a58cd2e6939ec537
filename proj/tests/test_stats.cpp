#include <gtest/gtest.h>

#include <cmath>

#include <pcst/noise.hpp>
#include <pcst/stats_verify.hpp>

using namespace pcst;

namespace {

/// rho by direct quadruple sum over the bilinear autocovariance.
double rho_direct(int n, double theta) {
    double total = 0.0;
    for (int i1 = 0; i1 < n; ++i1)
        for (int j1 = 0; j1 < n; ++j1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int j2 = 0; j2 < n; ++j2) {
                    const double r = bilinear_autocov(i1 - j1, i2 - j2, theta, 1.0);
                    total += r * r;
                }
    return total / (static_cast<double>(n) * n);
}

} // namespace

TEST(Rho, WhiteNoiseIsOne) {
    for (int n : {1, 4, 9}) EXPECT_NEAR(rho_bilinear(n, 1.0), 1.0, 1e-12);
}

TEST(Rho, ClosedFormSmallCases) {
    // n = 2, theta = 2: one axis contributes (1 + 1/4 + 1/4 + 1) / 2 = 1.25.
    EXPECT_NEAR(rho_bilinear(2, 2.0), 1.25 * 1.25, 1e-12);
}

TEST(Rho, SeparableEqualsExactQuadrupleSum) {
    for (int n : {1, 2, 5, 8})
        for (double theta : {1.0, 2.0, 3.0, 6.0, 11.0}) {
            const auto R = [theta](int a, int b) { return bilinear_autocov(a, b, theta, 3.0); };
            EXPECT_NEAR(rho_bilinear(n, theta), rho_exact(n, R, 3.0), 1e-9 * rho_direct(n, theta));
            EXPECT_NEAR(rho_bilinear(n, theta), rho_direct(n, theta), 1e-9 * rho_direct(n, theta));
        }
}

TEST(Rho, ToeplitzIdentityHolds) {
    const auto f = [](int t) { return std::exp(-0.3 * std::abs(t)) + 0.1 * (t % 3); };
    for (int n : {1, 2, 7, 20}) EXPECT_LT(toeplitz_identity_check(n, f), 1e-9);
}

TEST(RhoBound, LowerBoundsExactValue) {
    for (int n = 1; n <= 24; ++n)
        for (int theta = 1; theta <= 24; ++theta) {
            const RhoReport r = rho_report(n, theta);
            EXPECT_TRUE(r.bound_satisfied) << "n=" << n << " theta=" << theta;
            EXPECT_GE(r.rho_exact, r.rho_bound - 1e-9);
        }
}

TEST(RhoBound, EqualityWhenThetaIsOne) {
    for (int n : {1, 3, 10}) EXPECT_NEAR(rho_report(n, 1.0).equality_gap, 0.0, 1e-12);
}

TEST(RhoBound, QuadraticGrowthRatio) {
    EXPECT_NEAR(rho_bound(64, 32.0) / (32.0 * 32.0), 0.25, 0.025);
    EXPECT_THROW(rho_bound(0, 2.0), std::invalid_argument);
    EXPECT_THROW(rho_bound(4, 0.5), std::invalid_argument);
}

TEST(Moments, KnownSample) {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const SampleMoments m = moments(x);
    EXPECT_DOUBLE_EQ(m.mean, 3.0);
    EXPECT_DOUBLE_EQ(m.variance, 2.5);
    EXPECT_NEAR(m.skewness, 0.0, 1e-15);
    EXPECT_NEAR(m.excess_kurtosis, 1.7 - 3.0, 1e-12);
    EXPECT_NEAR(m.se_mean, std::sqrt(0.5), 1e-15);
}

TEST(McDelta, ZeroCleanDifferenceMatchesClosedForm) {
    const int n = 8, theta = 3;
    const Tensor zero({static_cast<std::uint32_t>(n * n)});
    const DeltaMCReport r = mc_delta(n, theta, 10.0, zero, 20000, 7, 1);
    EXPECT_DOUBLE_EQ(r.bias_expected, 200.0);
    EXPECT_NEAR(r.bias_est, r.bias_expected, 3.0 * r.bias_se);
    EXPECT_NEAR(r.var_est, r.var_bound, 0.05 * r.var_bound);
}

TEST(McDelta, CleanDifferenceOnlyAddsVariance) {
    const int n = 8, theta = 3;
    Tensor diff({static_cast<std::uint32_t>(n * n)});
    for (std::size_t i = 0; i < diff.size(); ++i) diff.data[i] = 4.0f * (static_cast<float>(i % 5) - 2.0f);
    const DeltaMCReport r = mc_delta(n, theta, 10.0, diff, 20000, 8, 1);
    EXPECT_NEAR(r.bias_est, r.bias_expected, 3.0 * r.bias_se);
    EXPECT_GE(r.var_est, r.var_bound - 3.0 * r.var_se);
}

TEST(McDelta, IndependentOfWorkerCount) {
    Tensor diff({16}, 1.0f);
    const DeltaMCReport a = mc_delta(4, 2, 5.0, diff, 500, 3, 1);
    const DeltaMCReport b = mc_delta(4, 2, 5.0, diff, 500, 3, 3);
    EXPECT_EQ(a.bias_est, b.bias_est);
    EXPECT_EQ(a.var_est, b.var_est);
}

TEST(McSyr, IndependentTargetMeanIsMinusSigmaSquared) {
    const SyrReport r = mc_syr_scenarios(SyrScenario::independent, 64, 10.0, 2000, 1);
    EXPECT_DOUBLE_EQ(r.expected_mean, -100.0);
    EXPECT_NEAR(r.stats.mean, -100.0, 3.0 * r.stats.se_mean + 0.5);
}

TEST(McSyr, TypeOneShiftsTheMeanUp) {
    const SyrReport r = mc_syr_scenarios(SyrScenario::type1, 64, 10.0, 2000, 2, 30.0);
    EXPECT_DOUBLE_EQ(r.expected_mean, -70.0);
    EXPECT_NEAR(r.stats.mean, -70.0, 3.0 * r.stats.se_mean + 0.5);
}

TEST(McSyr, TypeTwoShiftsTheMeanDown) {
    const SyrReport r = mc_syr_scenarios(SyrScenario::type2, 64, 10.0, 2000, 3, -50.0);
    EXPECT_DOUBLE_EQ(r.expected_mean, -150.0);
    EXPECT_NEAR(r.stats.mean, -150.0, 3.0 * r.stats.se_mean + 0.5);
}

TEST(McSyr, ImpossibleCrossCovarianceRejected) {
    EXPECT_THROW(mc_syr_scenarios(SyrScenario::type1, 16, 10.0, 10, 1, 150.0), std::invalid_argument);
    EXPECT_THROW(mc_syr_scenarios(SyrScenario::independent, 3, 10.0, 10, 1), std::invalid_argument);
}

TEST(McSyr, IndependentOfWorkerCount) {
    const SyrReport a = mc_syr_scenarios(SyrScenario::type1, 16, 10.0, 40, 9, 20.0, {}, 1);
    const SyrReport b = mc_syr_scenarios(SyrScenario::type1, 16, 10.0, 40, 9, 20.0, {}, 4);
    EXPECT_EQ(a.stats.mean, b.stats.mean);
    EXPECT_EQ(a.stats.variance, b.stats.variance);
}
