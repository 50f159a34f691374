#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <new>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "bmc/error.hpp"
#include "bmc/kernel.hpp"
#include "bmc/random.hpp"
#include "bmc/tree.hpp"

namespace bmc {

/// The sequence 𝔣 = (f_0, f_1, ...) with its centered terms f̃_ℓ.
class FunctionSeq {
public:
    enum class Mode { SingleGeneration, AllGenerations, Explicit };

    /// (f, 0, 0, ...)
    static FunctionSeq single_generation(const GridFunction& f, const Vector& mu);
    /// (f, f, f, ...)
    static FunctionSeq all_generations(const GridFunction& f, const Vector& mu);
    /// (f_0, ..., f_{L-1}, 0, 0, ...)
    static FunctionSeq explicit_list(const std::vector<GridFunction>& fs, const Vector& mu);

    Mode mode() const { return mode_; }
    const Vector& mu() const { return mu_; }
    const SpacePtr& space_ptr() const { return space_; }

    /// Number of leading terms that may be nonzero; -1 when infinite.
    int support() const;
    bool is_zero(int l) const { return support() >= 0 && l >= support(); }

    const GridFunction& raw(int l) const;
    const GridFunction& centered(int l) const;
    /// Index of the stored term used at position l, so that equal terms can
    /// share cached work.
    int slot(int l) const;

    /// c_∞ = sup_ℓ ‖f_ℓ‖ and sup_ℓ ‖f̃_ℓ‖.
    double c_inf() const { return c_inf_; }
    double c_inf_centered() const { return c_tilde_; }

    FunctionSeq scaled(double c) const;

private:
    FunctionSeq() = default;
    void finish();

    Mode mode_ = Mode::Explicit;
    SpacePtr space_;
    Vector mu_;
    std::vector<GridFunction> raw_;
    std::vector<GridFunction> centered_;
    std::vector<GridFunction> zero_;  // holds one zero function for the tail
    double c_inf_ = 0.0;
    double c_tilde_ = 0.0;
};

/// One realized tree up to depth n, heap layout.
struct TreeSample {
    int depth = 0;
    std::vector<State> states;
    std::string kernel_id;
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;

    State at(const NodeId& u) const { return states[flat_index(u)]; }
    const State* generation(int k) const { return states.data() + GenerationRange::offset(k); }
};

/// ν: the law of the root.
struct InitialDistribution {
    enum class Kind { Point, Stationary, Beta };
    Kind kind = Kind::Stationary;
    double x = 0.0;
    double a = 2.0, b = 2.0;

    static InitialDistribution point(State x) { return {Kind::Point, x, 0.0, 0.0}; }
    static InitialDistribution stationary() { return {}; }
    static InitialDistribution beta(double a, double b) { return {Kind::Beta, 0.0, a, b}; }

    /// "stationary", "point:X" or "beta:A,B".
    static InitialDistribution parse(const std::string& text);
    std::string to_string() const;
};

/// ν resolved against a kernel, ready to draw from.
class InitialSampler {
public:
    InitialSampler(const InitialDistribution& nu, const BranchingKernel& kernel);
    State draw(RandomStream& rng) const;

private:
    InitialDistribution nu_;
    SpacePtr space_;
    MarkovOperator::StationarySampler exact_;
    std::vector<double> cdf_;
};

struct EnsembleConfig {
    int replicas = 1;
    int depth = 0;
    std::uint64_t seed = kDefaultSeed;
    InitialDistribution nu;
    /// Worker threads; 0 means the BMC_THREADS environment variable or the
    /// hardware concurrency.
    int threads = 0;
};

int resolve_threads(int hint);

TreeSample sample_tree(const BranchingKernel& p, const InitialSampler& nu, int n, RandomStream& rng);
/// Same, reusing the storage of `out`.
void sample_tree_into(const BranchingKernel& p, const InitialSampler& nu, int n, RandomStream& rng, TreeSample& out);

/// Σ_{i∈G_k} f(X_i), summed pairwise.
double m_generation(const TreeSample& s, const GridFunction& f, int k);
/// Σ_{k≤n} m_generation(f, k).
double m_tree(const TreeSample& s, const GridFunction& f, int n);
/// Σ over the 2^d descendants of u at generation |u| + d.
double m_subtree_generation(const TreeSample& s, const GridFunction& f, const NodeId& u, int d);

/// N_{n,∅}(𝔣) = |G_n|^{-1/2} Σ_ℓ M_{G_{n-ℓ}}(f̃_ℓ).
double n_functional(const TreeSample& s, const FunctionSeq& fseq, int n);
/// N_{n,i}(𝔣) = |G_n|^{-1/2} Σ_{ℓ≤n-|i|} M_{iG_{n-|i|-ℓ}}(f̃_ℓ).
double n_functional_at(const TreeSample& s, const FunctionSeq& fseq, const NodeId& i, int n);

double pairwise_sum(const double* x, std::size_t n);

void validate(const EnsembleConfig& cfg);

/// Runs `eval(tree)` on B independent trees. Replica r draws from
/// RandomStream::derive(seed, r); results are ordered by replica and do not
/// depend on the thread count.
template <class Eval>
auto sample_ensemble(const BranchingKernel& p, const EnsembleConfig& cfg, Eval eval)
    -> std::vector<std::invoke_result_t<Eval&, const TreeSample&>> {
    using R = std::invoke_result_t<Eval&, const TreeSample&>;
    validate(cfg);
    const InitialSampler nu(cfg.nu, p);
    const int b = cfg.replicas;
    const int threads = std::min(resolve_threads(cfg.threads), b);
    std::vector<R> out(static_cast<std::size_t>(b));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));

    auto work = [&](int t) {
        const int lo = static_cast<int>(static_cast<long long>(b) * t / threads);
        const int hi = static_cast<int>(static_cast<long long>(b) * (t + 1) / threads);
        TreeSample tree;
        Eval local = eval;
        for (int r = lo; r < hi; ++r) {
            try {
                RandomStream rng = RandomStream::derive(cfg.seed, static_cast<std::uint64_t>(r));
                sample_tree_into(p, nu, cfg.depth, rng, tree);
                tree.seed = cfg.seed;
                tree.replica = static_cast<std::uint64_t>(r);
                out[static_cast<std::size_t>(r)] = local(static_cast<const TreeSample&>(tree));
            } catch (const std::bad_alloc&) {
                errors[t] = std::make_exception_ptr(NumericalError("replica " + std::to_string(r) + ": out of memory"));
                return;
            } catch (...) {
                errors[t] = std::current_exception();
                return;
            }
        }
    };

    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    for (std::size_t t = 0; t < errors.size(); ++t)
        if (errors[t]) std::rethrow_exception(errors[t]);
    return out;
}

}  // namespace bmc
