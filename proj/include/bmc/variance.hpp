#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bmc/kernel.hpp"
#include "bmc/simulate.hpp"

namespace bmc {

enum class Regime { SubCritical, Critical, SuperCritical };

/// Critical iff |2α² - 1| <= tol.
Regime classify_regime(double alpha, double tol = 1e-9);
std::string to_string(Regime r);

/// Everything the variance formulas need from a kernel.
struct KernelPack {
    BranchingKernel kernel;
    Vector mu;
    double alpha = 0.0;
    double m_estimate = 0.0;
    Regime regime = Regime::SubCritical;
    std::optional<SpectralData> spectral;  // critical regime only

    /// Throws NumericalError when alpha >= 1 or, in the critical regime,
    /// when the projectors cannot be formed.
    static KernelPack analyze(const BranchingKernel& kernel, double regime_tol = 1e-9);
};

/// One series: its truncated value, the number of terms evaluated and the
/// bound on everything left out.
struct SeriesResult {
    double value = 0.0;
    int terms = 0;
    double bound = 0.0;
};

struct VarianceResult {
    double sigma = 0.0;
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    int terms1 = 0;
    int terms2 = 0;
    double truncation_bound = 0.0;
    Regime regime = Regime::SubCritical;
};

SeriesResult sigma_sub_1(const FunctionSeq& fseq, const KernelPack& pack, double tol = 1e-12);
SeriesResult sigma_sub_2(const FunctionSeq& fseq, const KernelPack& pack, double tol = 1e-12);
SeriesResult sigma_crit_1(const FunctionSeq& fseq, const KernelPack& pack, double tol = 1e-12);
SeriesResult sigma_crit_2(const FunctionSeq& fseq, const KernelPack& pack, double tol = 1e-12);

/// A bivariate function Σ c·(u ⊗_sym v), kept in factored form.
struct SymTensorSum {
    struct Term {
        Complex coef;
        CVector u, v;
    };
    std::vector<Term> terms;

    /// Node values F(y_a, z_b).
    CMatrix dense() const;
    /// x -> ∫ F(y, z) P(x, dy, dz).
    CVector apply(const BranchingKernel& p) const;
};

/// f*_{k,ℓ} = Σ_j θ_j^{ℓ-k} R_j(f_k) ⊗_sym conj(R_j(f_ℓ)).
SymTensorSum f_star(const FunctionSeq& fseq, const SpectralData& spectral, int k, int l);

/// Σ = Σ₁ + 2Σ₂ for the regime of the kernel. SuperCritical raises
/// UnsupportedRegimeError.
VarianceResult sigma(const FunctionSeq& fseq, const KernelPack& pack, double tol = 1e-12);

/// Closed forms for 𝔣 = (f, 0, ...) and 𝔣 = (f, f, ...), evaluated directly.
double sigma_g(const GridFunction& f, const KernelPack& pack, double tol = 1e-12);
double sigma_t2(const GridFunction& f, const KernelPack& pack, double tol = 1e-12);
/// Σ_T = Σ_G + 2 Σ_{T,2}. The general series for (f, f, ...) equals 2 Σ_T,
/// the variance of |G_n|^{-1/2} M_{T_n}(f̃) rather than |T_n|^{-1/2} M_{T_n}(f̃).
double sigma_t(const GridFunction& f, const KernelPack& pack, double tol = 1e-12);

struct RateFunction {
    double sigma = 0.0;
};

/// I(x) = x² / (2σ); +∞ when σ = 0 and x ≠ 0; I(0) = 0.
double rate(const RateFunction& I, double x);

}  // namespace bmc
