#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bmc/kernel.hpp"
#include "bmc/moments.hpp"
#include "bmc/simulate.hpp"
#include "bmc/variance.hpp"

namespace bmc {

/// b_n = 2^{βn/2} (sub-critical) or (n 2^n)^{β/2} (critical), β ∈ (0, 1).
struct SpeedSequence {
    enum class Family { SubCriticalPower, CriticalPower };
    Family family = Family::SubCriticalPower;
    double beta = 0.4;

    SpeedSequence(Family f, double b);
    double operator()(int n) const;
    std::string to_string() const;
};

/// Sub-critical: ceil(n/2) - 1. Critical: n - ceil(sqrt(n)). Needs n >= 4.
int default_p(int n, Regime regime);

struct DecompositionConfig {
    int n = 12;
    int p = 5;
    Regime regime = Regime::SubCritical;

    void validate() const;
};

struct DecompositionReport {
    double n_value = 0.0;  // N_{n,∅}(𝔣)
    double delta = 0.0;
    double r0 = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double bracket = 0.0;
    double residual = 0.0;
};

/// Conditional mean c(x) and second moment s(x) of Σ_ℓ M_{G_{p-ℓ}}(f̃_ℓ)
/// for a chain started at x, built once per (𝔣, p) and evaluated per node.
class DecompositionOracles {
public:
    DecompositionOracles(const BranchingKernel& kernel, const FunctionSeq& fseq, const DecompositionConfig& cfg);

    DecompositionReport operator()(const TreeSample& sample) const;

private:
    const BranchingKernel* kernel_;
    const FunctionSeq* fseq_;
    DecompositionConfig cfg_;
    OracleForm mean_;
    OracleForm second_;
};

DecompositionReport decompose(const TreeSample& sample, const FunctionSeq& fseq, const DecompositionConfig& cfg,
                              const BranchingKernel& kernel);
double bracket(const TreeSample& sample, const FunctionSeq& fseq, const DecompositionConfig& cfg,
               const BranchingKernel& kernel);

/// Scaling applied to the samples before thresholding: none for the
/// sub-critical regime, n^{-1/2} for the critical one.
enum class Normalization { SubCritical, Critical };

struct RatePoint {
    double delta = 0.0;
    std::uint64_t count = 0;
    std::optional<double> empirical;
    double exact = 0.0;
};

struct RateCurve {
    std::vector<RatePoint> points;
    int n = 0;
    std::uint64_t replicas = 0;
    double b_n = 0.0;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string speed;
    std::string normalization;
};

/// count(δ) = #{|s / b_n| > δ}, empirical = -b_n^{-2} log(count / B).
RateCurve empirical_rate(const std::vector<double>& samples, double b_n, int n, const std::vector<double>& deltas,
                         Normalization normalization, double sigma);

/// The sub-critical samples read on the critical scale: the log-frequency
/// of {|s / b_n| > δ} is divided by n b_n², the critical speed.
RateCurve wrong_speed_probe(const std::vector<double>& samples, double b_n, int n, const std::vector<double>& deltas,
                            double sigma);

/// 40 evenly spaced points over (0, min(4 √Σ max(1, b_n) / b_n, δ*)], where
/// δ* is the largest δ at which a Gaussian with variance Σ still expects one
/// exceedance among B samples.
std::vector<double> default_delta_grid(double sigma, double b_n, std::uint64_t replicas, int points = 40);

}  // namespace bmc
