#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bmc/error.hpp"
#include "bmc/mdp.hpp"

using namespace bmc;

namespace {

const KernelPack& beta_pack() {
    static const KernelPack p = KernelPack::analyze(beta_mixture_kernel(128));
    return p;
}

GridFunction identity_fn(const KernelPack& p) {
    return GridFunction::from(p.kernel.space_ptr(), [](double x) { return x; });
}

std::vector<double> gaussian(std::size_t n, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> v(n);
    for (double& x : v) x = z(rng);
    return v;
}

// -log P(|N(0, σ²)| > t) / speed², the exact finite-sample target of the
// empirical rate for Gaussian input.
double gaussian_rate(double t, double sd, double speed2) {
    return -std::log(std::erfc(t / (sd * std::sqrt(2.0)))) / speed2;
}

}  // namespace

TEST(Speed, Values) {
    SpeedSequence sub(SpeedSequence::Family::SubCriticalPower, 0.4);
    EXPECT_NEAR(sub(12), std::exp2(2.4), 1e-12);
    SpeedSequence crit(SpeedSequence::Family::CriticalPower, 0.5);
    EXPECT_NEAR(crit(10), std::pow(10 * 1024.0, 0.25), 1e-12);
    EXPECT_THROW(SpeedSequence(SpeedSequence::Family::SubCriticalPower, 1.0), ConfigError);
    EXPECT_THROW(SpeedSequence(SpeedSequence::Family::SubCriticalPower, 0.0), ConfigError);
    EXPECT_EQ(sub.to_string(), "sub(0.40000000000000002)");
}

TEST(Speed, Admissibility) {
    for (double beta : {0.1, 0.4, 0.9}) {
        SpeedSequence sub(SpeedSequence::Family::SubCriticalPower, beta);
        SpeedSequence crit(SpeedSequence::Family::CriticalPower, beta);
        double prev_sub = INFINITY, prev_crit = INFINITY;
        for (int n = 1; n <= 60; ++n) {
            const double rs = sub(n) * sub(n) / std::exp2(n);
            const double rc = crit(n) * crit(n) / (n * std::exp2(n));
            EXPECT_LT(rs, prev_sub);
            EXPECT_LT(rc, prev_crit);
            prev_sub = rs;
            prev_crit = rc;
            if (n > 1) EXPECT_GT(sub(n), sub(n - 1));
        }
        EXPECT_LT(prev_sub, std::pow(2.0, -60 * (1 - beta)) * 1.0001);
    }
}

TEST(Schedule, DefaultP) {
    EXPECT_EQ(default_p(12, Regime::SubCritical), 5);
    EXPECT_EQ(default_p(13, Regime::SubCritical), 6);
    EXPECT_EQ(default_p(16, Regime::Critical), 12);
    EXPECT_THROW(default_p(3, Regime::SubCritical), ConfigError);
    EXPECT_THROW(default_p(12, Regime::SuperCritical), UnsupportedRegimeError);
    for (int n = 4; n <= 40; ++n) {
        DecompositionConfig sub{n, default_p(n, Regime::SubCritical), Regime::SubCritical};
        EXPECT_NO_THROW(sub.validate());
        EXPECT_THROW((DecompositionConfig{n, sub.p + 1, Regime::SubCritical}.validate()), ConfigError);
        DecompositionConfig crit{n, default_p(n, Regime::Critical), Regime::Critical};
        EXPECT_NO_THROW(crit.validate());
    }
}

TEST(Schedule, CriticalGapOutgrowsLogarithms) {
    double prev = 0.0;
    for (int n = 10000; n <= 1000000; n += 10000) {
        const double r = (n - default_p(n, Regime::Critical)) / (10 * std::log(static_cast<double>(n)));
        EXPECT_GT(r, prev * (1 - 1e-3));
        prev = r;
    }
    EXPECT_GT(prev, 1.0);
    EXPECT_NEAR(static_cast<double>(default_p(1000000, Regime::Critical)) / 1e6, 1.0, 1.5e-3);
}

TEST(Decompose, IdentityAndSigns) {
    const KernelPack& p = beta_pack();
    GridFunction f = identity_fn(p);
    for (const FunctionSeq& s : {FunctionSeq::single_generation(f, p.mu), FunctionSeq::all_generations(f, p.mu),
                                 FunctionSeq::explicit_list({f, f * f, f * -2.0}, p.mu)}) {
        DecompositionConfig cfg{10, 4, Regime::SubCritical};
        DecompositionOracles oracles(p.kernel, s, cfg);
        EnsembleConfig ec;
        ec.replicas = 20;
        ec.depth = 10;
        ec.seed = 5;
        for (const DecompositionReport& r : sample_ensemble(p.kernel, ec, oracles)) {
            EXPECT_LT(r.residual, 1e-10);
            EXPECT_GE(r.bracket, 0.0);
            EXPECT_GE(r.r2, 0.0);
        }
    }
}

TEST(Decompose, CriticalIdentity) {
    KernelPack p = KernelPack::analyze(two_state_kernel(critical_two_state_p()));
    FunctionSeq s = FunctionSeq::all_generations(GridFunction::indicator(p.kernel.space_ptr(), 0), p.mu);
    DecompositionConfig cfg{12, default_p(12, Regime::Critical), Regime::Critical};
    EnsembleConfig ec;
    ec.replicas = 20;
    ec.depth = 12;
    for (const DecompositionReport& r : sample_ensemble(p.kernel, ec, DecompositionOracles(p.kernel, s, cfg))) {
        EXPECT_LT(r.residual, 1e-10);
        EXPECT_GE(r.bracket, -1e-14);
    }
}

TEST(Decompose, ConstantSequenceIsZero) {
    const KernelPack& p = beta_pack();
    FunctionSeq s = FunctionSeq::all_generations(GridFunction::constant(p.kernel.space_ptr(), 0.4), p.mu);
    InitialSampler nu(InitialDistribution::stationary(), p.kernel);
    RandomStream rng(3);
    TreeSample t = sample_tree(p.kernel, nu, 8, rng);
    DecompositionReport r = decompose(t, s, {8, 3, Regime::SubCritical}, p.kernel);
    for (double v : {r.n_value, r.delta, r.r0, r.r1, r.r2, r.bracket}) EXPECT_NEAR(v, 0.0, 1e-14);
    EXPECT_NEAR(bracket(t, s, {8, 3, Regime::SubCritical}, p.kernel), 0.0, 1e-14);
}

TEST(Decompose, MartingaleIncrementHasMeanZero) {
    const KernelPack& p = beta_pack();
    FunctionSeq s = FunctionSeq::single_generation(identity_fn(p), p.mu);
    DecompositionOracles oracles(p.kernel, s, {10, 4, Regime::SubCritical});
    EnsembleConfig ec;
    ec.replicas = 10000;
    ec.depth = 10;
    ec.seed = 17;
    auto reports = sample_ensemble(p.kernel, ec, oracles);
    double m = 0.0, m2 = 0.0;
    for (const auto& r : reports) {
        m += r.delta;
        m2 += r.delta * r.delta;
    }
    m /= reports.size();
    const double se = std::sqrt((m2 / reports.size() - m * m) / reports.size());
    EXPECT_LT(std::abs(m), 3 * se);
}

TEST(Decompose, RejectsShallowTreeAndBadCut) {
    const KernelPack& p = beta_pack();
    FunctionSeq s = FunctionSeq::single_generation(identity_fn(p), p.mu);
    EXPECT_THROW(DecompositionOracles(p.kernel, s, {10, 5, Regime::SubCritical}), ConfigError);
    InitialSampler nu(InitialDistribution::stationary(), p.kernel);
    RandomStream rng(3);
    TreeSample t = sample_tree(p.kernel, nu, 6, rng);
    EXPECT_THROW(decompose(t, s, {8, 3, Regime::SubCritical}, p.kernel), ConfigError);
}

TEST(Rate, ZeroSamples) {
    std::vector<double> zeros(1000, 0.0);
    RateCurve c = empirical_rate(zeros, 3.0, 10, {0.1, 0.2}, Normalization::SubCritical, 0.05);
    for (const RatePoint& pt : c.points) {
        EXPECT_EQ(pt.count, 0u);
        EXPECT_FALSE(pt.empirical.has_value());
    }
    RateCurve w = wrong_speed_probe(zeros, 3.0, 10, {0.1}, 0.05);
    EXPECT_FALSE(w.points[0].empirical.has_value());
    EXPECT_THROW(empirical_rate({}, 3.0, 10, {0.1}, Normalization::SubCritical, 0.05), ConfigError);
}

TEST(Rate, GaussianSamplesMatchTailOracle) {
    const double sd = 0.5, b = 3.0;
    const auto samples = gaussian(1000000, sd, 123);
    std::vector<double> deltas;
    for (int i = 1; i <= 40; ++i) deltas.push_back(0.02 * i);
    RateCurve c = empirical_rate(samples, b, 12, deltas, Normalization::SubCritical, sd * sd);
    std::uint64_t prev = UINT64_MAX;
    int checked = 0;
    for (const RatePoint& pt : c.points) {
        EXPECT_LE(pt.count, prev);
        prev = pt.count;
        EXPECT_NEAR(pt.exact, pt.delta * pt.delta / (2 * sd * sd), 1e-14);
        if (pt.count < 100) continue;
        ASSERT_TRUE(pt.empirical);
        EXPECT_GE(*pt.empirical, 0.0);
        const double oracle = gaussian_rate(pt.delta * b, sd, b * b);
        EXPECT_NEAR(*pt.empirical / oracle, 1.0, 0.05) << pt.delta;
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

TEST(Rate, CriticalNormalizationDividesBySqrtN) {
    const auto samples = gaussian(20000, 1.0, 9);
    std::vector<double> scaled(samples);
    for (double& x : scaled) x *= 3.0;
    RateCurve a = empirical_rate(samples, 2.0, 9, {0.1, 0.3}, Normalization::SubCritical, 1.0);
    RateCurve b = empirical_rate(scaled, 2.0, 9, {0.1, 0.3}, Normalization::Critical, 1.0);
    for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].count, b.points[i].count);
}

TEST(Rate, WrongSpeedProbeDirection) {
    const int n = 12;
    const double sd = 0.25, b = 4.0;
    const auto samples = gaussian(1000000, sd, 77);
    std::vector<double> shrunk(samples);
    for (double& x : shrunk) x /= std::sqrt(double(n));
    std::vector<double> deltas;
    for (int i = 1; i <= 30; ++i) deltas.push_back(0.005 * i);
    RateCurve plain = wrong_speed_probe(samples, b, n, deltas, sd * sd);
    RateCurve inflated = wrong_speed_probe(shrunk, b, n, deltas, sd * sd);
    int checked = 0;
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const RatePoint& p = plain.points[i];
        const RatePoint& q = inflated.points[i];
        if (p.count < 100 || q.count < 100) continue;
        const double expect = gaussian_rate(deltas[i] * b * std::sqrt(double(n)), sd, n * b * b) /
                              gaussian_rate(deltas[i] * b, sd, n * b * b);
        const double ratio = *q.empirical / *p.empirical;
        EXPECT_GT(ratio, 1.0);
        EXPECT_NEAR(ratio / expect, 1.0, 0.05);
        ++checked;
    }
    EXPECT_GT(checked, 3);
}

TEST(Rate, DefaultGrid) {
    const double sigma = 6.0 / 115, b = std::exp2(2.4);
    auto g = default_delta_grid(sigma, b, 50000);
    ASSERT_EQ(g.size(), 40u);
    EXPECT_GT(g.front(), 0.0);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
    EXPECT_LE(g.back(), 4 * std::sqrt(sigma) * std::max(1.0, b) / b + 1e-15);
    // B · P(|Z| > t) = 1 at the clipped end.
    const double t = g.back() * b / std::sqrt(sigma);
    EXPECT_NEAR(50000 * std::erfc(t / std::sqrt(2.0)), 1.0, 1e-6);
    EXPECT_THROW(default_delta_grid(0.0, b, 100), ConfigError);
}
