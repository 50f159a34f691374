#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bmc/error.hpp"
#include "bmc/moments.hpp"
#include "bmc/simulate.hpp"

using namespace bmc;

namespace {

GridFunction random_fn(const SpacePtr& s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    Vector v(s->size());
    for (int i = 0; i < v.size(); ++i) v[i] = u(rng);
    return GridFunction(s, v);
}

BranchingKernel correlated_pair_kernel() {
    auto s = StateSpace::finite(2);
    Matrix j0(2, 2), j1(2, 2);
    j0 << 0.5, 0.2, 0.1, 0.2;
    j1 << 0.1, 0.3, 0.3, 0.3;
    return BranchingKernel::joint(s, {j0, j1}, "correlated");
}

}  // namespace

TEST(Moments, GenerationZero) {
    BranchingKernel t = two_state_kernel(0.7);
    GridFunction f(t.space_ptr(), (Vector(2) << 0.4, -1.3).finished());
    EXPECT_DOUBLE_EQ(mean_oracle(t, f, 0, 1), -1.3);
    EXPECT_DOUBLE_EQ(second_moment_oracle(t, f, 0, 1), 1.69);
}

TEST(Moments, BetaMixtureMean) {
    BranchingKernel k = beta_mixture_kernel(256);
    GridFunction f = GridFunction::from(k.space_ptr(), [](double x) { return x; });
    for (double x : {0.0, 0.3, 0.5, 0.77, 1.0}) EXPECT_NEAR(mean_oracle(k, f, 1, x), 2 * (x / 5 + 0.4), 1e-6) << x;
}

TEST(Moments, TwoStateMeanByHand) {
    const double p = 0.7;
    BranchingKernel t = two_state_kernel(p);
    GridFunction f(t.space_ptr(), (Vector(2) << 2.0, -1.0).finished());
    EXPECT_NEAR(mean_oracle(t, f, 1, 0), 2 * (p * 2.0 + (1 - p) * -1.0), 1e-15);
    MomentRequest r{MomentRequest::Kind::Mean, f, std::nullopt, 1, 0, 0.0, std::nullopt};
    EXPECT_NEAR(brute_force_moment(t, r), mean_oracle(t, f, 1, 0), 1e-14);
}

TEST(Moments, OraclesMatchBruteForce) {
    std::mt19937_64 rng(2024);
    for (const BranchingKernel& k : {two_state_kernel(0.8), two_state_kernel(critical_two_state_p()),
                                     correlated_pair_kernel()}) {
        for (int trial = 0; trial < 10; ++trial) {
            GridFunction f = random_fn(k.space_ptr(), rng), g = random_fn(k.space_ptr(), rng);
            for (int n = 0; n <= 3; ++n) {
                for (int x = 0; x < 2; ++x) {
                    MomentRequest mean{MomentRequest::Kind::Mean, f, std::nullopt, n, 0, double(x), std::nullopt};
                    EXPECT_NEAR(mean_oracle(k, f, n, x), brute_force_moment(k, mean), 1e-10);
                    MomentRequest second{MomentRequest::Kind::Second, f, std::nullopt, n, 0, double(x), std::nullopt};
                    EXPECT_NEAR(second_moment_oracle(k, f, n, x), brute_force_moment(k, second), 1e-10);
                    for (int m = 0; m <= n; ++m) {
                        MomentRequest cross{MomentRequest::Kind::Cross, f, g, n, m, double(x), std::nullopt};
                        EXPECT_NEAR(cross_moment_oracle(k, f, g, n, m, x), brute_force_moment(k, cross), 1e-10)
                            << k.id() << " n=" << n << " m=" << m;
                    }
                }
            }
        }
    }
}

TEST(Moments, CrossReductions) {
    BranchingKernel t = two_state_kernel(0.65);
    std::mt19937_64 rng(8);
    GridFunction f = random_fn(t.space_ptr(), rng), g = random_fn(t.space_ptr(), rng);
    for (int n = 0; n <= 4; ++n)
        for (int x = 0; x < 2; ++x) {
            EXPECT_NEAR(cross_moment_oracle(t, f, f, n, n, x), second_moment_oracle(t, f, n, x), 1e-12);
            const double qn = iterate_apply(t.mean_operator(), f, n).at(x);
            EXPECT_NEAR(cross_moment_oracle(t, f, g, n, 0, x), std::exp2(n) * g.at(x) * qn, 1e-12);
        }
}

TEST(Moments, BruteForceWithInitialLaw) {
    BranchingKernel t = two_state_kernel(0.8);
    std::mt19937_64 rng(1);
    GridFunction f = random_fn(t.space_ptr(), rng);
    Vector nu(2);
    nu << 0.3, 0.7;
    MomentRequest r{MomentRequest::Kind::Second, f, std::nullopt, 2, 0, std::nullopt, nu};
    const double expect = 0.3 * second_moment_oracle(t, f, 2, 0) + 0.7 * second_moment_oracle(t, f, 2, 1);
    EXPECT_NEAR(brute_force_moment(t, r), expect, 1e-12);
    MomentRequest zero{MomentRequest::Kind::Second, GridFunction::constant(t.space_ptr(), 0.0), std::nullopt, 2, 0, 0.0,
                       std::nullopt};
    EXPECT_EQ(brute_force_moment(t, zero), 0.0);
    MomentRequest big{MomentRequest::Kind::Mean, f, std::nullopt, 6, 0, 0.0, std::nullopt};
    EXPECT_THROW(brute_force_moment(t, big), ConfigError);
}

TEST(Moments, VarianceNonnegativeAndCauchySchwarz) {
    std::mt19937_64 rng(77);
    BranchingKernel k = beta_mixture_kernel(64);
    const Vector mu = invariant_measure(k.mean_operator());
    for (const BranchingKernel* p : {&k}) {
        for (int trial = 0; trial < 5; ++trial) {
            GridFunction f = center(random_fn(p->space_ptr(), rng), mu);
            GridFunction g = center(random_fn(p->space_ptr(), rng), mu);
            for (int n = 0; n <= 5; ++n)
                for (double x : {0.0, 0.2, 0.9}) {
                    const double m = mean_oracle(*p, f, n, x);
                    const double s = second_moment_oracle(*p, f, n, x);
                    EXPECT_GE(s - m * m, -1e-10);
                    const double c = cross_moment_oracle(*p, f, g, n, n, x);
                    const double sg = second_moment_oracle(*p, g, n, x);
                    EXPECT_LE(c * c, s * sg * (1 + 1e-8) + 1e-14);
                }
        }
    }
}

TEST(Moments, SecondMomentMatchesSimulation) {
    BranchingKernel k = beta_mixture_kernel(512);
    const Vector mu = invariant_measure(k.mean_operator());
    GridFunction ft = center(GridFunction::from(k.space_ptr(), [](double x) { return x; }), mu);
    EnsembleConfig cfg;
    cfg.replicas = 200000;
    cfg.depth = 6;
    cfg.seed = 31;
    cfg.nu = InitialDistribution::point(0.5);
    auto v = sample_ensemble(k, cfg, [&ft](const TreeSample& t) {
        const double m = m_generation(t, ft, 6);
        return m * m;
    });
    const double mean = pairwise_sum(v.data(), v.size()) / v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double se = std::sqrt(var / (v.size() - 1) / v.size());
    EXPECT_LT(std::abs(mean - second_moment_oracle(k, ft, 6, 0.5)), 3 * se);
}
