#include "bmc/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bmc/error.hpp"

namespace bmc {

SpeedSequence::SpeedSequence(Family f, double b) : family(f), beta(b) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("speed exponent beta must lie in (0, 1)");
}

double SpeedSequence::operator()(int n) const {
    if (n < 0) throw ConfigError("speed index must be nonnegative");
    const double dn = static_cast<double>(n);
    if (family == Family::SubCriticalPower) return std::exp2(beta * dn / 2.0);
    return std::pow(dn * std::exp2(dn), beta / 2.0);
}

std::string SpeedSequence::to_string() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s(%.17g)", family == Family::SubCriticalPower ? "sub" : "crit", beta);
    return buf;
}

int default_p(int n, Regime regime) {
    if (n < 4) throw ConfigError("decomposition needs n >= 4");
    switch (regime) {
        case Regime::SubCritical: return (n + 1) / 2 - 1;
        case Regime::Critical: return n - static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
        case Regime::SuperCritical: break;
    }
    throw UnsupportedRegimeError("no decomposition schedule for the super-critical regime");
}

void DecompositionConfig::validate() const {
    if (p < 1) throw ConfigError("cut generation p must be at least 1");
    switch (regime) {
        case Regime::SubCritical:
            if (2 * p >= n) throw ConfigError("sub-critical decomposition needs p < n/2");
            break;
        case Regime::Critical:
            if (p >= n) throw ConfigError("critical decomposition needs p < n");
            break;
        case Regime::SuperCritical: throw UnsupportedRegimeError("no decomposition for the super-critical regime");
    }
}

// ------------------------------------------------------------- decomposition

namespace {

OracleForm conditional_mean(const BranchingKernel& k, const FunctionSeq& fseq, int p) {
    OracleForm form(k);
    for (int l = 0; l <= p && !fseq.is_zero(l); ++l) form += mean_form(k, fseq.centered(l), p - l);
    return form;
}

OracleForm conditional_second(const BranchingKernel& k, const FunctionSeq& fseq, int p) {
    OracleForm form(k);
    for (int l = 0; l <= p && !fseq.is_zero(l); ++l) {
        form += second_form(k, fseq.centered(l), p - l);
        for (int l2 = l + 1; l2 <= p && !fseq.is_zero(l2); ++l2) {
            OracleForm c = cross_form(k, fseq.centered(l), fseq.centered(l2), p - l, p - l2);
            form += c;
            form += c;
        }
    }
    return form;
}

}  // namespace

DecompositionOracles::DecompositionOracles(const BranchingKernel& kernel, const FunctionSeq& fseq,
                                           const DecompositionConfig& cfg)
    : kernel_(&kernel), fseq_(&fseq), cfg_(cfg), mean_(kernel), second_(kernel) {
    cfg_.validate();
    if (!fseq.space_ptr()->same_as(kernel.space())) throw ConfigError("sequence and kernel live on different state spaces");
    mean_ = conditional_mean(kernel, fseq, cfg.p);
    second_ = conditional_second(kernel, fseq, cfg.p);
}

DecompositionReport DecompositionOracles::operator()(const TreeSample& s) const {
    const int n = cfg_.n, p = cfg_.p;
    if (s.depth < n) throw ConfigError("tree is shallower than the decomposition depth");
    const double scale = std::exp2(-0.5 * n);
    DecompositionReport r;
    r.n_value = n_functional(s, *fseq_, n);

    std::vector<double> parts;
    for (int k = 0; k < n - p; ++k) {
        if (fseq_->is_zero(n - k)) continue;
        parts.push_back(m_generation(s, fseq_->centered(n - k), k));
    }
    r.r0 = scale * pairwise_sum(parts.data(), parts.size());

    const int g = n - p;
    const std::size_t width = GenerationRange::generation_size(g);
    std::vector<double> ni(width), ci(width), ci2(width), vi(width);
    for (std::size_t j = 0; j < width; ++j) {
        NodeId u(g, j);
        const State x = s.at(u);
        ni[j] = n_functional_at(s, *fseq_, u, n);
        const double c = mean_(x);
        ci[j] = c;
        ci2[j] = c * c;
        vi[j] = second_(x) - c * c;
    }
    const double sum_n = pairwise_sum(ni.data(), width);
    r.r1 = scale * pairwise_sum(ci.data(), width);
    r.delta = sum_n - r.r1;
    r.r2 = scale * scale * pairwise_sum(ci2.data(), width);
    r.bracket = scale * scale * pairwise_sum(vi.data(), width);
    r.residual = std::abs(r.n_value - (r.delta + r.r0 + r.r1));
    return r;
}

DecompositionReport decompose(const TreeSample& sample, const FunctionSeq& fseq, const DecompositionConfig& cfg,
                              const BranchingKernel& kernel) {
    return DecompositionOracles(kernel, fseq, cfg)(sample);
}

double bracket(const TreeSample& sample, const FunctionSeq& fseq, const DecompositionConfig& cfg,
               const BranchingKernel& kernel) {
    return decompose(sample, fseq, cfg, kernel).bracket;
}

// -------------------------------------------------------------- rate curves

namespace {

RateCurve tail_curve(const std::vector<double>& samples, double scale, double speed2, const std::vector<double>& deltas,
                     double sigma) {
    if (samples.empty()) throw ConfigError("empty sample array");
    if (!(scale > 0.0)) throw ConfigError("speed must be positive");
    std::vector<double> t(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) t[i] = std::abs(samples[i]) / scale;
    std::sort(t.begin(), t.end());
    const double b = static_cast<double>(samples.size());
    RateCurve c;
    RateFunction I{sigma};
    for (double d : deltas) {
        if (!(d > 0.0)) throw ConfigError("thresholds must be positive");
        RatePoint pt;
        pt.delta = d;
        pt.count = static_cast<std::uint64_t>(t.end() - std::upper_bound(t.begin(), t.end(), d));
        if (pt.count > 0) pt.empirical = -std::log(static_cast<double>(pt.count) / b) / speed2;
        pt.exact = rate(I, d);
        c.points.push_back(pt);
    }
    c.replicas = samples.size();
    c.sigma = sigma;
    return c;
}

}  // namespace

RateCurve empirical_rate(const std::vector<double>& samples, double b_n, int n, const std::vector<double>& deltas,
                         Normalization normalization, double sigma) {
    double scale = b_n;
    if (normalization == Normalization::Critical) {
        if (n < 1) throw ConfigError("critical normalization needs n >= 1");
        scale *= std::sqrt(static_cast<double>(n));
    }
    RateCurve c = tail_curve(samples, scale, b_n * b_n, deltas, sigma);
    c.n = n;
    c.b_n = b_n;
    c.normalization = normalization == Normalization::Critical ? "critical" : "sub-critical";
    return c;
}

RateCurve wrong_speed_probe(const std::vector<double>& samples, double b_n, int n, const std::vector<double>& deltas,
                            double sigma) {
    if (n < 1) throw ConfigError("critical speed needs n >= 1");
    RateCurve c = tail_curve(samples, b_n, static_cast<double>(n) * b_n * b_n, deltas, sigma);
    c.n = n;
    c.b_n = b_n;
    c.normalization = "critical-speed";
    return c;
}

std::vector<double> default_delta_grid(double sigma, double b_n, std::uint64_t replicas, int points) {
    if (!(sigma > 0.0)) throw ConfigError("default threshold grid needs sigma > 0");
    if (!(b_n > 0.0)) throw ConfigError("speed must be positive");
    if (replicas < 1 || points < 1) throw ConfigError("grid needs at least one replica and one point");
    const double sd = std::sqrt(sigma);
    double top = 4.0 * sd * std::max(1.0, b_n) / b_n;
    // Largest t with B · P(|Z| > t) >= 1.
    const double target = 1.0 / static_cast<double>(replicas);
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        (std::erfc(mid / std::sqrt(2.0)) >= target ? lo : hi) = mid;
    }
    top = std::min(top, lo * sd / b_n);
    std::vector<double> grid;
    for (int i = 1; i <= points; ++i) grid.push_back(top * i / points);
    return grid;
}

}  // namespace bmc
