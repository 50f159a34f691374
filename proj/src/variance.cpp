#include "bmc/variance.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "bmc/error.hpp"

namespace bmc {

Regime classify_regime(double alpha, double tol) {
    double d = 2.0 * alpha * alpha - 1.0;
    if (std::abs(d) <= tol) return Regime::Critical;
    return d < 0.0 ? Regime::SubCritical : Regime::SuperCritical;
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::SubCritical: return "sub-critical";
        case Regime::Critical: return "critical";
        case Regime::SuperCritical: return "super-critical";
    }
    return "";
}

KernelPack KernelPack::analyze(const BranchingKernel& kernel, double regime_tol) {
    KernelPack pack{kernel, {}, 0.0, 0.0, Regime::SubCritical, std::nullopt};
    const MarkovOperator& q = kernel.mean_operator();
    pack.mu = invariant_measure(q);
    auto ev = eigenvalues(q);
    pack.alpha = ev.size() > 1 && std::abs(ev[1]) >= 1e-14 ? std::abs(ev[1]) : 0.0;
    if (pack.alpha >= 1.0 - 1e-10) throw NumericalError("second eigenvalue has modulus 1; the chain is not geometrically ergodic");
    pack.regime = classify_regime(pack.alpha, regime_tol);
    if (pack.regime == Regime::Critical) {
        pack.spectral = spectral_projectors(q);
        pack.m_estimate = pack.spectral->ergodicity_constant;
    } else {
        pack.m_estimate = ergodicity_constant(q, pack.mu, pack.alpha);
    }
    return pack;
}

namespace {

constexpr int kMaxTerms = 20000;

double mu_dot(const Vector& mu, const Vector& v) { return mu.dot(v); }
Complex cmu_dot(const Vector& mu, const CVector& v) { return (mu.cast<Complex>().array() * v.array()).sum(); }

[[noreturn]] void no_convergence(const char* what) {
    throw NumericalError(std::string(what) + ": series did not reach its tolerance within the term budget");
}

// Cached powers Q^k f̃ of the stored terms of a sequence.
class PowerCache {
public:
    PowerCache(const FunctionSeq& fseq, const MarkovOperator& q) : fseq_(fseq), q_(q) {}

    const Vector& get(int slot_index, int l, int k) {
        auto& list = cache_[slot_index];
        if (list.empty()) list.push_back(fseq_.centered(l).values());
        while (static_cast<int>(list.size()) <= k) list.push_back(q_.apply(list.back()));
        return list[static_cast<std::size_t>(k)];
    }
    double norm(int slot_index, int l, int k) { return get(slot_index, l, k).cwiseAbs().maxCoeff(); }

private:
    const FunctionSeq& fseq_;
    const MarkovOperator& q_;
    std::map<int, std::vector<Vector>> cache_;
};

struct SubContext {
    const KernelPack& pack;
    const FunctionSeq& fseq;
    double tol;
    double m;      // M covering the sequence's own terms
    double denom;  // 1 - 2α²
    double c2;     // sup ‖f̃_ℓ‖²

    SubContext(const FunctionSeq& f, const KernelPack& p, double t) : pack(p), fseq(f), tol(t) {
        if (p.regime != Regime::SubCritical) throw ConfigError("sub-critical series need 2α² < 1");
        if (!(t > 0.0)) throw ConfigError("tolerance must be positive");
        std::vector<GridFunction> probes;
        int stored = f.support() < 0 ? 1 : f.support();
        for (int l = 0; l < stored; ++l) probes.push_back(f.raw(l));
        m = std::max({1.0, p.m_estimate, ergodicity_constant(p.kernel.mean_operator(), p.mu, p.alpha, probes)});
        denom = 1.0 - 2.0 * p.alpha * p.alpha;
        c2 = f.c_inf_centered() * f.c_inf_centered();
    }

    double threshold(double partial) const { return tol * std::max(std::abs(partial), 1e-6 * c2); }
};

}  // namespace

// Σ_ℓ 2^{-ℓ} [⟨μ, f̃_ℓ²⟩ + Σ_k 2^k ⟨μ, P((Q^k f̃_ℓ)⊗²)⟩]
SeriesResult sigma_sub_1(const FunctionSeq& fseq, const KernelPack& pack, double tol) {
    SubContext ctx(fseq, pack, tol);
    const BranchingKernel& p = pack.kernel;
    PowerCache pw(fseq, p.mean_operator());
    std::map<int, SeriesResult> inner_cache;

    auto inner = [&](int l) -> SeriesResult {
        int s = fseq.slot(l);
        if (auto it = inner_cache.find(s); it != inner_cache.end()) return it->second;
        SeriesResult r;
        const Vector& f0 = pw.get(s, l, 0);
        r.value = mu_dot(pack.mu, f0.cwiseProduct(f0));
        r.terms = 1;
        for (int k = 0;; ++k) {
            const Vector& g = pw.get(s, l, k);
            double gn = g.cwiseAbs().maxCoeff();
            double tail = std::ldexp(1.0, k) * ctx.m * ctx.m * gn * gn / ctx.denom;
            if (tail <= ctx.threshold(r.value)) {
                r.bound = tail;
                break;
            }
            if (k >= kMaxTerms) no_convergence("sigma_sub_1");
            r.value += std::ldexp(1.0, k) * mu_dot(pack.mu, p.apply_pair(g, g));
            ++r.terms;
        }
        inner_cache[s] = r;
        return r;
    };

    SeriesResult out;
    // Any single ℓ term is at most c̃²(1 + M²/(1 - 2α²)).
    const double per_term = ctx.c2 * (1.0 + ctx.m * ctx.m / ctx.denom);
    for (int l = 0;; ++l) {
        if (fseq.is_zero(l)) break;
        double tail = std::ldexp(per_term, 1 - l);
        if (fseq.support() < 0 && tail <= ctx.threshold(out.value)) {
            out.bound += tail;
            break;
        }
        if (l >= kMaxTerms) no_convergence("sigma_sub_1");
        SeriesResult r = inner(l);
        out.value += std::ldexp(r.value, -l);
        out.bound += std::ldexp(r.bound, -l);
        out.terms += r.terms;
    }
    return out;
}

// Σ_{ℓ<k} 2^{-ℓ} [⟨μ, f̃_k Q^{k-ℓ} f̃_ℓ⟩ + Σ_r 2^r ⟨μ, P(Q^r f̃_k ⊗_sym Q^{k-ℓ+r} f̃_ℓ)⟩]
SeriesResult sigma_sub_2(const FunctionSeq& fseq, const KernelPack& pack, double tol) {
    SubContext ctx(fseq, pack, tol);
    const BranchingKernel& p = pack.kernel;
    PowerCache pw(fseq, p.mean_operator());
    std::map<std::tuple<int, int, int>, SeriesResult> cache;
    const double ct = fseq.c_inf_centered();
    const double c1 = ct * (1.0 + ctx.m * ctx.m / ctx.denom);  // |T(ℓ, ℓ+d)| <= c1 ‖Q^d f̃_ℓ‖
    const double alpha = pack.alpha;

    auto pair_term = [&](int l, int d) -> SeriesResult {
        const int k = l + d;
        const int sk = fseq.slot(k), sl = fseq.slot(l);
        auto key = std::make_tuple(sk, sl, d);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
        SeriesResult r;
        r.value = mu_dot(pack.mu, pw.get(sk, k, 0).cwiseProduct(pw.get(sl, l, d)));
        r.terms = 1;
        for (int q = 0;; ++q) {
            const Vector& a = pw.get(sk, k, q);
            const Vector& b = pw.get(sl, l, d + q);
            double tail = std::ldexp(1.0, q) * ctx.m * ctx.m * a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff() / ctx.denom;
            if (tail <= ctx.threshold(r.value)) {
                r.bound = tail;
                break;
            }
            if (q >= kMaxTerms) no_convergence("sigma_sub_2");
            r.value += std::ldexp(1.0, q) * mu_dot(pack.mu, p.apply_pair_sym(a, b));
            ++r.terms;
        }
        cache[key] = r;
        return r;
    };

    SeriesResult out;
    const int support = fseq.support();
    const double l_tail_unit = alpha < 1.0 ? c1 * ctx.m * ct * alpha / (1.0 - alpha) : 0.0;
    for (int l = 0;; ++l) {
        if (support >= 0 && l + 1 >= support) break;
        double l_tail = std::ldexp(l_tail_unit, 1 - l);
        if (support < 0 && l_tail <= ctx.threshold(out.value)) {
            out.bound += l_tail;
            break;
        }
        if (l >= kMaxTerms) no_convergence("sigma_sub_2");
        double row = 0.0, row_bound = 0.0;
        for (int d = 1;; ++d) {
            if (support >= 0 && l + d >= support) break;
            double d_tail = c1 * ctx.m * pw.norm(fseq.slot(l), l, d) / (1.0 - alpha);
            if (d_tail <= ctx.threshold(row)) {
                row_bound += d_tail;
                break;
            }
            if (d >= kMaxTerms) no_convergence("sigma_sub_2");
            SeriesResult r = pair_term(l, d);
            row += r.value;
            row_bound += r.bound;
            out.terms += r.terms;
        }
        out.value += std::ldexp(row, -l);
        out.bound += std::ldexp(row_bound, -l);
    }
    return out;
}

// ------------------------------------------------------------------ critical

namespace {

struct CritContext {
    const KernelPack& pack;
    const SpectralData& sd;
    double tol;
    double b;  // Σ_j ‖R_j‖² c_∞², a bound on |⟨μ, P f*_{k,ℓ}⟩|

    CritContext(const FunctionSeq& f, const KernelPack& p, double t) : pack(p), sd(require(p)), tol(t) {
        if (!(t > 0.0)) throw ConfigError("tolerance must be positive");
        double s = 0.0;
        for (const auto& r : sd.projectors) {
            double n = r.matrix.cwiseAbs().rowwise().sum().maxCoeff();
            s += n * n;
        }
        b = s * f.c_inf() * f.c_inf();
    }

    static const SpectralData& require(const KernelPack& p) {
        if (p.regime != Regime::Critical) throw ConfigError("critical series need 2α² = 1");
        if (!p.spectral || p.spectral->projectors.empty()) throw NumericalError("spectral projectors unavailable");
        return *p.spectral;
    }

    double threshold(double partial) const { return tol * std::max(std::abs(partial), 1e-6 * b); }
};

// Projections R_j(f_ℓ) per stored slot.
class ProjectionCache {
public:
    ProjectionCache(const FunctionSeq& fseq, const SpectralData& sd) : fseq_(fseq), sd_(sd) {}
    const std::vector<CVector>& get(int l) {
        int s = fseq_.slot(l);
        auto& v = cache_[s];
        if (v.empty())
            for (const auto& r : sd_.projectors) v.push_back(r.apply(fseq_.raw(l).values()));
        return v;
    }

private:
    const FunctionSeq& fseq_;
    const SpectralData& sd_;
    std::map<int, std::vector<CVector>> cache_;
};

Complex realize_check(Complex z, const char* what) {
    if (std::abs(z.imag()) > 1e-8 * std::max(1.0, std::abs(z.real())))
        throw NumericalError(std::string(what) + ": imaginary residue " + std::to_string(z.imag()) + " exceeds 1e-8");
    return z;
}

Complex f_star_mean(const BranchingKernel& p, const Vector& mu, const SpectralData& sd, const std::vector<CVector>& rk,
                    const std::vector<CVector>& rl, int d) {
    Complex s = 0.0;
    for (std::size_t j = 0; j < sd.projectors.size(); ++j) {
        Complex w = std::pow(sd.projectors[j].theta, -d);
        s += w * cmu_dot(mu, p.apply_pair_sym(rk[j], CVector(rl[j].conjugate())));
    }
    return s;
}

}  // namespace

SymTensorSum f_star(const FunctionSeq& fseq, const SpectralData& spectral, int k, int l) {
    SymTensorSum out;
    for (const auto& r : spectral.projectors) {
        CVector a = r.apply(fseq.raw(k).values());
        CVector b = r.apply(fseq.raw(l).values()).conjugate();
        out.terms.push_back({std::pow(r.theta, l - k), std::move(a), std::move(b)});
    }
    return out;
}

CMatrix SymTensorSum::dense() const {
    if (terms.empty()) return CMatrix();
    const auto n = terms.front().u.size();
    CMatrix m = CMatrix::Zero(n, n);
    for (const auto& t : terms) m += t.coef * 0.5 * (t.u * t.v.transpose() + t.v * t.u.transpose());
    return m;
}

CVector SymTensorSum::apply(const BranchingKernel& p) const {
    CVector out = CVector::Zero(p.space().size());
    for (const auto& t : terms) out += t.coef * p.apply_pair_sym(t.u, t.v);
    return out;
}

// Σ_k 2^{-k} ⟨μ, P f*_{k,k}⟩
SeriesResult sigma_crit_1(const FunctionSeq& fseq, const KernelPack& pack, double tol) {
    CritContext ctx(fseq, pack, tol);
    ProjectionCache proj(fseq, ctx.sd);
    std::map<int, Complex> cache;
    Complex total = 0.0;
    SeriesResult out;
    for (int k = 0;; ++k) {
        if (fseq.is_zero(k)) break;
        double tail = std::ldexp(ctx.b, 1 - k);
        if (fseq.support() < 0 && tail <= ctx.threshold(total.real())) {
            out.bound = tail;
            break;
        }
        if (k >= kMaxTerms) no_convergence("sigma_crit_1");
        int s = fseq.slot(k);
        if (!cache.count(s)) {
            const auto& r = proj.get(k);
            cache[s] = f_star_mean(pack.kernel, pack.mu, ctx.sd, r, r, 0);
        }
        total += std::ldexp(1.0, -k) * cache[s];
        ++out.terms;
    }
    out.value = realize_check(total, "sigma_crit_1").real();
    return out;
}

// Σ_{ℓ<k} 2^{-(k+ℓ)/2} ⟨μ, P f*_{k,ℓ}⟩
SeriesResult sigma_crit_2(const FunctionSeq& fseq, const KernelPack& pack, double tol) {
    CritContext ctx(fseq, pack, tol);
    ProjectionCache proj(fseq, ctx.sd);
    std::map<std::tuple<int, int, int>, Complex> cache;
    const double r2 = std::sqrt(0.5);
    const int support = fseq.support();
    Complex total = 0.0;
    SeriesResult out;
    for (int l = 0;; ++l) {
        if (support >= 0 && l + 1 >= support) break;
        double l_tail = std::ldexp(ctx.b, 1 - l) / (std::sqrt(2.0) - 1.0);
        if (support < 0 && l_tail <= ctx.threshold(total.real())) {
            out.bound += l_tail;
            break;
        }
        if (l >= kMaxTerms) no_convergence("sigma_crit_2");
        Complex row = 0.0;
        for (int d = 1;; ++d) {
            const int k = l + d;
            if (support >= 0 && k >= support) break;
            double d_tail = ctx.b * std::pow(r2, d) / (1.0 - r2);
            if (d_tail <= ctx.threshold(row.real())) {
                out.bound += std::ldexp(d_tail, -l);
                break;
            }
            if (d >= kMaxTerms) no_convergence("sigma_crit_2");
            auto key = std::make_tuple(fseq.slot(k), fseq.slot(l), d);
            if (!cache.count(key)) cache[key] = f_star_mean(pack.kernel, pack.mu, ctx.sd, proj.get(k), proj.get(l), d);
            row += std::pow(r2, d) * cache[key];
            ++out.terms;
        }
        total += std::ldexp(1.0, -l) * row;
    }
    out.value = realize_check(total, "sigma_crit_2").real();
    return out;
}

// ------------------------------------------------------------------ dispatch

VarianceResult sigma(const FunctionSeq& fseq, const KernelPack& pack, double tol) {
    VarianceResult r;
    r.regime = pack.regime;
    SeriesResult s1, s2;
    switch (pack.regime) {
        case Regime::SuperCritical:
            throw UnsupportedRegimeError("super-critical regime (2α² > 1) has no variance formula here; alpha = " +
                                         std::to_string(pack.alpha));
        case Regime::SubCritical:
            s1 = sigma_sub_1(fseq, pack, tol);
            s2 = sigma_sub_2(fseq, pack, tol);
            break;
        case Regime::Critical:
            s1 = sigma_crit_1(fseq, pack, tol);
            s2 = sigma_crit_2(fseq, pack, tol);
            break;
    }
    r.sigma1 = s1.value;
    r.sigma2 = s2.value;
    r.terms1 = s1.terms;
    r.terms2 = s2.terms;
    r.truncation_bound = s1.bound + 2.0 * s2.bound;
    r.sigma = r.sigma1 + 2.0 * r.sigma2;
    if (r.sigma < -1e-8) throw NumericalError("computed variance is negative: " + std::to_string(r.sigma));
    if (r.sigma < 0.0) r.sigma = 0.0;
    return r;
}

// ------------------------------------------------------------- closed forms

namespace {

void require_regime(const KernelPack& pack) {
    if (pack.regime == Regime::SuperCritical) throw UnsupportedRegimeError("super-critical regime (2α² > 1) is not supported");
}

double crit_weighted(const GridFunction& f, const KernelPack& pack, bool t2) {
    const SpectralData& sd = CritContext::require(pack);
    Complex s = 0.0;
    for (const auto& r : sd.projectors) {
        CVector a = r.apply(f.values());
        Complex v = cmu_dot(pack.mu, pack.kernel.apply_pair_sym(a, CVector(a.conjugate())));
        s += t2 ? v / (std::sqrt(2.0) * r.theta - 1.0) : v;
    }
    return realize_check(s, "critical closed form").real();
}

}  // namespace

double sigma_g(const GridFunction& f, const KernelPack& pack, double tol) {
    require_regime(pack);
    if (pack.regime == Regime::Critical) return crit_weighted(f, pack, false);
    const MarkovOperator& q = pack.kernel.mean_operator();
    const double m = std::max({1.0, pack.m_estimate, ergodicity_constant(q, pack.mu, pack.alpha, {f})});
    const double denom = 1.0 - 2.0 * pack.alpha * pack.alpha;
    Vector g = center(f, pack.mu).values();
    const double ct = g.cwiseAbs().maxCoeff();
    const double floor = 1e-6 * ct * ct;
    double s = mu_dot(pack.mu, g.cwiseProduct(g));
    double w = 1.0;
    for (int k = 0; k < kMaxTerms; ++k) {
        double gn = g.cwiseAbs().maxCoeff();
        if (w * m * m * gn * gn / denom <= tol * std::max(std::abs(s), floor)) return s;
        s += w * mu_dot(pack.mu, pack.kernel.apply_pair(g, g));
        g = q.apply(g);
        w *= 2.0;
    }
    no_convergence("sigma_g");
}

double sigma_t2(const GridFunction& f, const KernelPack& pack, double tol) {
    require_regime(pack);
    if (pack.regime == Regime::Critical) return crit_weighted(f, pack, true);
    const MarkovOperator& q = pack.kernel.mean_operator();
    const double m = std::max({1.0, pack.m_estimate, ergodicity_constant(q, pack.mu, pack.alpha, {f})});
    const double denom = 1.0 - 2.0 * pack.alpha * pack.alpha;
    const Vector ft = center(f, pack.mu).values();
    const double ct = ft.cwiseAbs().maxCoeff();
    const double floor = 1e-6 * ct * ct;
    std::vector<Vector> pw{ft};
    auto power = [&](int k) -> const Vector& {
        while (static_cast<int>(pw.size()) <= k) pw.push_back(q.apply(pw.back()));
        return pw[static_cast<std::size_t>(k)];
    };
    double total = 0.0;
    for (int k = 1; k < kMaxTerms; ++k) {
        // |term_k| <= ‖f̃‖ ‖Q^k f̃‖ (1 + M²/(1-2α²)), summed geometrically in α.
        double k_tail = ct * power(k).cwiseAbs().maxCoeff() * (1.0 + m * m / denom) * m / (1.0 - pack.alpha);
        if (k_tail <= tol * std::max(std::abs(total), floor)) return total;
        double term = mu_dot(pack.mu, ft.cwiseProduct(power(k)));
        double w = 1.0;
        for (int r = 0; r < kMaxTerms; ++r) {
            const Vector& a = power(r);
            const Vector& b = power(r + k);
            double tail = w * m * m * a.cwiseAbs().maxCoeff() * b.cwiseAbs().maxCoeff() / denom;
            if (tail <= tol * std::max(std::abs(term), floor)) break;
            term += w * mu_dot(pack.mu, pack.kernel.apply_pair_sym(a, b));
            w *= 2.0;
        }
        total += term;
    }
    no_convergence("sigma_t2");
}

double sigma_t(const GridFunction& f, const KernelPack& pack, double tol) {
    return sigma_g(f, pack, tol) + 2.0 * sigma_t2(f, pack, tol);
}

double rate(const RateFunction& I, double x) {
    if (I.sigma < 0.0) throw ConfigError("rate function needs sigma >= 0");
    if (x == 0.0) return 0.0;
    if (I.sigma == 0.0) return std::numeric_limits<double>::infinity();
    return x * x / (2.0 * I.sigma);
}

}  // namespace bmc
