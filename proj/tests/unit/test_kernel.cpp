#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bmc/error.hpp"
#include "bmc/kernel.hpp"

using namespace bmc;

namespace {

const BranchingKernel& beta512() {
    static const BranchingKernel k = beta_mixture_kernel(512);
    return k;
}

const Vector& beta_mu() {
    static const Vector mu = invariant_measure(beta512().mean_operator());
    return mu;
}

GridFunction identity_fn(const SpacePtr& s) {
    return GridFunction::from(s, [](double x) { return x; });
}

}  // namespace

TEST(StateSpace, Validation) {
    EXPECT_THROW(StateSpace::finite(1), ConfigError);
    EXPECT_THROW(StateSpace::uniform_grid(4), ConfigError);
    Vector nodes = Vector::LinSpaced(10, 0.0, 1.0);
    Vector w = Vector::Constant(10, 0.1);
    EXPECT_NO_THROW(StateSpace::grid(nodes, w));
    w[0] = 0.2;
    EXPECT_THROW(StateSpace::grid(nodes, w), ConfigError);
    nodes[3] = nodes[2];
    EXPECT_THROW(StateSpace::grid(nodes, Vector::Constant(10, 0.1)), ConfigError);
}

TEST(StateSpace, GridWeightsSumToOne) {
    for (Quadrature q : {Quadrature::Gregory, Quadrature::Trapezoid}) {
        auto s = StateSpace::uniform_grid(257, q);
        EXPECT_NEAR(s->weights().sum(), 1.0, 1e-12);
        EXPECT_GT(s->weights().minCoeff(), 0.0);
    }
}

TEST(MarkovOperator, RejectsNonStochastic) {
    Matrix k(2, 2);
    k << 0.5, 0.6, 0.5, 0.5;
    EXPECT_THROW(MarkovOperator::from_matrix(StateSpace::finite(2), k, "bad"), ConfigError);
    k << -0.1, 1.1, 0.5, 0.5;
    EXPECT_THROW(MarkovOperator::from_matrix(StateSpace::finite(2), k, "bad"), ConfigError);
}

TEST(Kernel, BetaMixtureMeanOfIdentity) {
    const auto& q = beta512().mean_operator();
    GridFunction qf = q.apply(identity_fn(q.space_ptr()));
    for (int i = 0; i < q.size(); ++i) {
        const double x = q.space().nodes()[i];
        EXPECT_NEAR(qf.values()[i], x / 5 + 0.4, 1e-6);
    }
}

TEST(Kernel, ConstantsAreFixed) {
    for (const BranchingKernel* k : {&beta512()}) {
        const auto& q = k->mean_operator();
        GridFunction one = GridFunction::constant(q.space_ptr(), 1.0);
        EXPECT_LT((q.apply(one).values().array() - 1.0).abs().maxCoeff(), 1e-10);
    }
    BranchingKernel t = two_state_kernel(0.3);
    Vector one = Vector::Ones(2);
    EXPECT_EQ(t.mean_operator().apply(one), one);
}

TEST(Kernel, TwoStateEigenfunction) {
    BranchingKernel t = two_state_kernel(critical_two_state_p());
    Vector h(2);
    h << 1.0, -1.0;
    Vector qh = t.mean_operator().apply(h);
    EXPECT_NEAR(qh[0], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_NEAR(qh[1], -1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Kernel, IteratedCenteredIdentity) {
    const auto& q = beta512().mean_operator();
    GridFunction ft = center(identity_fn(q.space_ptr()), beta_mu());
    EXPECT_EQ(iterate_apply(q, ft, 0).values(), ft.values());
    for (int k = 1; k <= 6; ++k) {
        GridFunction g = iterate_apply(q, ft, k);
        for (int i = 0; i < q.size(); i += 7)
            EXPECT_NEAR(g.values()[i], std::pow(5.0, -k) * (q.space().nodes()[i] - 0.5), 1e-7);
    }
}

TEST(Kernel, CenteredIteratesShrink) {
    for (const BranchingKernel& k : {beta_mixture_kernel(128), two_state_kernel(0.8), two_state_kernel(0.2)}) {
        const auto& q = k.mean_operator();
        const Vector mu = invariant_measure(q);
        GridFunction g = center(q.space().is_finite() ? GridFunction::indicator(q.space_ptr(), 0)
                                                      : identity_fn(q.space_ptr()),
                                mu);
        double prev = g.sup_norm();
        for (int n = 1; n <= 30; ++n) {
            g = q.apply(g);
            EXPECT_LE(g.sup_norm(), prev * (1 + 1e-12) + 1e-300);
            prev = g.sup_norm();
        }
    }
}

TEST(Kernel, StationaryMeasureIsBeta22) {
    const auto& q = beta512().mean_operator();
    const Vector& mu = beta_mu();
    const auto& s = q.space();
    EXPECT_NEAR(mu.sum(), 1.0, 1e-12);
    EXPECT_GE(mu.minCoeff(), 0.0);
    for (int i = 1; i + 1 < s.size(); ++i) {
        const double x = s.nodes()[i];
        const double expected = 6 * x * (1 - x) * s.weights()[i];
        EXPECT_NEAR(mu[i], expected, 1e-6);
        EXPECT_NEAR(mu[i] / expected, 1.0, 1e-5) << x;
    }
    EXPECT_NEAR(inner(mu, identity_fn(q.space_ptr())), 0.5, 1e-12);
    Vector muq = q.matrix().transpose() * mu;
    EXPECT_LT((muq - mu).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Kernel, InvarianceUnderOperator) {
    const auto& q = beta512().mean_operator();
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 5; ++t) {
        Vector f(q.size());
        for (int i = 0; i < f.size(); ++i) f[i] = u(rng);
        EXPECT_NEAR(beta_mu().dot(q.apply(f)), beta_mu().dot(f), 1e-10);
    }
}

TEST(Kernel, TwoStateSymmetricStationary) {
    Vector mu = invariant_measure(two_state_kernel(0.9).mean_operator());
    EXPECT_NEAR(mu[0], 0.5, 1e-12);
    EXPECT_NEAR(mu[1], 0.5, 1e-12);
}

TEST(Kernel, PeriodicChainHasNoInvariantMeasure) {
    BranchingKernel flip = two_state_kernel(0.0);
    EXPECT_FALSE(is_primitive_on_support(flip.mean_operator()));
    EXPECT_THROW(invariant_measure(flip.mean_operator()), NumericalError);
}

TEST(Kernel, TransientStatesAllowed) {
    Matrix k(3, 3);
    k << 0.0, 0.5, 0.5, 0.0, 0.3, 0.7, 0.0, 0.6, 0.4;
    auto q = MarkovOperator::from_matrix(StateSpace::finite(3), k, "transient");
    EXPECT_TRUE(is_primitive_on_support(q));
    Vector mu = invariant_measure(q);
    EXPECT_NEAR(mu[0], 0.0, 1e-14);
    EXPECT_NEAR(mu.sum(), 1.0, 1e-12);
}

TEST(Kernel, Center) {
    const auto& q = beta512().mean_operator();
    GridFunction c = center(GridFunction::constant(q.space_ptr(), 3.5), beta_mu());
    EXPECT_LT(c.sup_norm(), 1e-12);
    GridFunction ft = center(identity_fn(q.space_ptr()), beta_mu());
    for (int i = 0; i < q.size(); i += 11) EXPECT_NEAR(ft.values()[i], q.space().nodes()[i] - 0.5, 1e-12);
    GridFunction ftt = center(ft, beta_mu());
    EXPECT_LT((ftt.values() - ft.values()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kernel, AlphaBetaMixture) {
    BranchingKernel k = beta_mixture_kernel(256);
    ErgodicityRate r = ergodicity_rate(k.mean_operator());
    EXPECT_NEAR(r.alpha, 0.2, 1e-6);
    EXPECT_FALSE(r.degenerate);
}

TEST(Kernel, AlphaTwoState) {
    for (double p : {0.1, 0.3, 0.5, 0.75, 0.95}) {
        ErgodicityRate r = ergodicity_rate(two_state_kernel(p).mean_operator());
        EXPECT_NEAR(r.alpha, std::abs(2 * p - 1), 1e-12) << p;
    }
    const double pc = critical_two_state_p();
    const double a = std::abs(2 * pc - 1);
    EXPECT_NEAR(2 * a * a, 1.0, 1e-15);
    EXPECT_EQ(ergodicity_rate(two_state_kernel(0.5).mean_operator()).alpha, 0.0);
}

TEST(Kernel, IdentityIsDegenerate) {
    auto q = MarkovOperator::from_matrix(StateSpace::finite(3), Matrix::Identity(3, 3), "identity");
    ErgodicityRate r = ergodicity_rate(q);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.alpha, 1.0);
}

TEST(Kernel, ErgodicityConstantBoundsProbes) {
    for (const BranchingKernel& k : {beta_mixture_kernel(128), two_state_kernel(0.8)}) {
        const auto& q = k.mean_operator();
        const Vector mu = invariant_measure(q);
        const ErgodicityRate r = ergodicity_rate(q, mu);
        std::vector<GridFunction> probes;
        if (q.space().is_finite()) {
            probes = {GridFunction::indicator(q.space_ptr(), 0), GridFunction::indicator(q.space_ptr(), 1)};
        } else {
            probes = {identity_fn(q.space_ptr()), GridFunction::from(q.space_ptr(), [](double x) { return x * x; })};
        }
        double tightest = 0.0;
        for (const GridFunction& f : probes) {
            Vector g = center(f, mu).values();
            for (int n = 0; n <= 30; ++n) {
                const double lhs = g.cwiseAbs().maxCoeff();
                const double rhs = r.m_estimate * std::pow(r.alpha, n) * f.sup_norm();
                if (lhs < 1e-12 * f.sup_norm() && n > 0) break;
                EXPECT_LE(lhs, rhs * (1 + 1e-9));
                tightest = std::max(tightest, lhs / rhs);
                g = q.matrix() * g;
            }
        }
        EXPECT_GT(tightest, 0.5);
    }
}

TEST(Kernel, CriticalProjector) {
    BranchingKernel t = two_state_kernel(critical_two_state_p());
    SpectralData sd = spectral_projectors(t.mean_operator());
    ASSERT_EQ(sd.projectors.size(), 1u);
    const Projector& r = sd.projectors[0];
    EXPECT_NEAR(r.eigenvalue.real(), 1 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(std::abs(r.eigenvalue.imag()), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(r.theta - Complex(1.0)), 0.0, 1e-12);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int i = 0; i < 10; ++i) {
        Vector f(2);
        f << u(rng), u(rng);
        CVector rf = r.apply(f);
        const double c = (f[0] - f[1]) / 2;
        EXPECT_NEAR(std::abs(rf[0] - c), 0.0, 1e-12);
        EXPECT_NEAR(std::abs(rf[1] + c), 0.0, 1e-12);
    }
    CVector rc = r.apply(Vector(Vector::Constant(2, 4.0)));
    EXPECT_LT(rc.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Kernel, ProjectorAlgebra) {
    // A 4-state chain with a complex pair at the second modulus.
    Matrix k(4, 4);
    k << 0.1, 0.7, 0.1, 0.1,
         0.1, 0.1, 0.7, 0.1,
         0.7, 0.1, 0.1, 0.1,
         0.25, 0.25, 0.25, 0.25;
    auto q = MarkovOperator::from_matrix(StateSpace::finite(4), k, "rotation");
    for (const MarkovOperator* op : {&q}) {
        SpectralData sd = spectral_projectors(*op);
        ASSERT_FALSE(sd.projectors.empty());
        const auto n = op->size();
        CMatrix sum = CMatrix::Zero(n, n);
        const CMatrix kc = op->matrix().cast<Complex>();
        for (std::size_t a = 0; a < sd.projectors.size(); ++a) {
            const CMatrix& ra = sd.projectors[a].matrix;
            EXPECT_NEAR(std::abs(sd.projectors[a].theta), 1.0, 1e-12);
            EXPECT_LT((ra * ra - ra).cwiseAbs().maxCoeff(), 1e-8);
            EXPECT_LT((kc * ra - sd.projectors[a].eigenvalue * ra).cwiseAbs().maxCoeff(), 1e-8);
            for (std::size_t b = 0; b < sd.projectors.size(); ++b)
                if (a != b) EXPECT_LT((ra * sd.projectors[b].matrix).cwiseAbs().maxCoeff(), 1e-8);
            sum += ra;
        }
        EXPECT_LT((sum * sum - sum).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((sum * CVector::Ones(n)).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Kernel, CenterHat) {
    BranchingKernel t = two_state_kernel(critical_two_state_p());
    SpectralData sd = spectral_projectors(t.mean_operator());
    GridFunction c = GridFunction::constant(t.space_ptr(), 2.0);
    EXPECT_LT(center_hat(c, sd, 3).sup_norm(), 1e-12);
    GridFunction ind = GridFunction::indicator(t.space_ptr(), 0);
    for (int n : {0, 1, 3, 7}) {
        GridFunction h = center_hat(ind, sd, n);
        // On two states f̃ is itself the eigenvector, so only the α^n factor
        // survives: f̂ = (1 - α^n) f̃.
        const double a = std::pow(1 / std::sqrt(2.0), n);
        EXPECT_NEAR(h.values()[0], (1 - a) * 0.5, 1e-12);
        EXPECT_NEAR(h.values()[1], -(1 - a) * 0.5, 1e-12);
        EXPECT_NEAR(sd.mu.dot(h.values()), 0.0, 1e-14);
    }
}

TEST(Kernel, ProductFactorization) {
    const BranchingKernel& k = beta512();
    const auto& q = k.mean_operator();
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> d(-1, 1);
    for (int t = 0; t < 20; ++t) {
        Vector u(q.size()), v(q.size());
        for (int i = 0; i < q.size(); ++i) {
            u[i] = d(rng);
            v[i] = d(rng);
        }
        Matrix g = u * v.transpose();
        Vector lhs = k.apply_bivariate(g);
        Vector rhs = q.apply(u).cwiseProduct(q.apply(v));
        EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((k.apply_pair(u, v) - rhs).cwiseAbs().maxCoeff(), 1e-12);
    }
    Vector one = k.apply_bivariate(Matrix::Ones(q.size(), q.size()));
    EXPECT_LT((one.array() - 1.0).abs().maxCoeff(), 1e-10);
    GridFunction ft = center(identity_fn(q.space_ptr()), beta_mu());
    Vector sq = k.apply_pair(ft.values(), ft.values());
    for (int i = 0; i < q.size(); i += 13) {
        const double e = (q.space().nodes()[i] - 0.5) / 5;
        EXPECT_NEAR(sq[i], e * e, 1e-7);
    }
}

TEST(Kernel, JointKernelMarginals) {
    auto s = StateSpace::finite(2);
    Matrix j0(2, 2), j1(2, 2);
    j0 << 0.5, 0.2, 0.1, 0.2;
    j1 << 0.1, 0.3, 0.3, 0.3;
    BranchingKernel k = BranchingKernel::joint(s, {j0, j1}, "joint");
    auto [p0, p1] = k.marginals();
    EXPECT_NEAR(p0.matrix()(0, 0), 0.7, 1e-15);
    EXPECT_NEAR(p1.matrix()(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(p1.matrix()(1, 1), 0.6, 1e-15);
    for (const MarkovOperator* m : std::initializer_list<const MarkovOperator*>{&p0, &p1, &k.mean_operator()})
        EXPECT_LT((m->matrix().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_NEAR(k.mean_operator().matrix()(0, 0), 0.65, 1e-15);
    Vector u(2), v(2);
    u << 1.0, 2.0;
    v << -1.0, 3.0;
    Vector sym = k.apply_pair_sym(u, v);
    Vector expect = 0.5 * (k.apply_pair(u, v) + k.apply_pair(v, u));
    EXPECT_LT((sym - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Kernel, BetaMixtureChildLaw) {
    const auto& q = beta512().mean_operator();
    RandomStream rng(99);
    const int draws = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double y = q.sample(0.0, rng);
        sum += y;
        sum2 += y * y;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
    EXPECT_LT(std::abs(mean - 0.4), 3 * se);
}

TEST(Kernel, DeterministicRow) {
    Matrix k(3, 3);
    k << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    auto q = MarkovOperator::from_matrix(StateSpace::finite(3), k, "cycle");
    RandomStream rng(1);
    for (int i = 0; i < 100; ++i) {
        EXPECT_EQ(q.sample(0, rng), 1.0);
        EXPECT_EQ(q.sample(2, rng), 0.0);
    }
}

TEST(Kernel, BuiltinsAndCustomDensity) {
    KernelParams p;
    p.grid_nodes = 64;
    p.density = "(1-x)*y*(1-y)^2*12 + x*y^2*(1-y)*12";
    BranchingKernel custom = builtin_kernel("grid_custom", p);
    BranchingKernel beta = builtin_kernel("beta_mixture", p);
    EXPECT_LT((custom.mean_operator().matrix() - beta.mean_operator().matrix()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((custom.mean_operator().matrix().rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
    EXPECT_THROW(builtin_kernel("nope", p), ConfigError);
    p.density = "x - y";
    EXPECT_THROW(builtin_kernel("grid_custom", p), ConfigError);
    EXPECT_THROW(two_state_kernel(1.5), ConfigError);
}

TEST(Kernel, BetaNormalizersByQuadrature) {
    // ∫ y (1-y)^2 dy = ∫ y^2 (1-y) dy = 1/12.
    auto s = StateSpace::uniform_grid(64);
    double a = 0.0, b = 0.0;
    for (int i = 0; i < s->size(); ++i) {
        const double y = s->nodes()[i];
        a += s->weights()[i] * y * (1 - y) * (1 - y);
        b += s->weights()[i] * y * y * (1 - y);
    }
    EXPECT_NEAR(a, 1.0 / 12, 1e-12);
    EXPECT_NEAR(b, 1.0 / 12, 1e-12);
}
