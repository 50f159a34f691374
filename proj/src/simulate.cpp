#include "bmc/simulate.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace bmc {

// --------------------------------------------------------------- FunctionSeq

namespace {

GridFunction zero_on(const SpacePtr& space) {
    return GridFunction(space, Vector::Zero(space->size()), [](double) { return 0.0; });
}

}  // namespace

void FunctionSeq::finish() {
    zero_.push_back(zero_on(space_));
    c_inf_ = 0.0;
    c_tilde_ = 0.0;
    for (const auto& f : raw_) {
        if (!f.space().same_as(*space_)) throw ConfigError("sequence terms live on different state spaces");
        if (mu_.size() != space_->size()) throw ConfigError("measure does not match the state space");
        centered_.push_back(center(f, mu_));
        c_inf_ = std::max(c_inf_, f.sup_norm());
        c_tilde_ = std::max(c_tilde_, centered_.back().sup_norm());
    }
}

FunctionSeq FunctionSeq::single_generation(const GridFunction& f, const Vector& mu) {
    FunctionSeq s;
    s.mode_ = Mode::SingleGeneration;
    s.space_ = f.space_ptr();
    s.mu_ = mu;
    s.raw_ = {f};
    s.finish();
    return s;
}

FunctionSeq FunctionSeq::all_generations(const GridFunction& f, const Vector& mu) {
    FunctionSeq s;
    s.mode_ = Mode::AllGenerations;
    s.space_ = f.space_ptr();
    s.mu_ = mu;
    s.raw_ = {f};
    s.finish();
    return s;
}

FunctionSeq FunctionSeq::explicit_list(const std::vector<GridFunction>& fs, const Vector& mu) {
    if (fs.empty()) throw ConfigError("explicit function sequence is empty");
    FunctionSeq s;
    s.mode_ = Mode::Explicit;
    s.space_ = fs.front().space_ptr();
    s.mu_ = mu;
    s.raw_ = fs;
    s.finish();
    return s;
}

int FunctionSeq::support() const {
    if (mode_ == Mode::AllGenerations) return -1;
    return static_cast<int>(raw_.size());
}

int FunctionSeq::slot(int l) const {
    if (l < 0) throw ConfigError("negative sequence index");
    if (mode_ == Mode::AllGenerations) return 0;
    return l < static_cast<int>(raw_.size()) ? l : -1;
}

const GridFunction& FunctionSeq::raw(int l) const {
    int s = slot(l);
    return s < 0 ? zero_.front() : raw_[static_cast<std::size_t>(s)];
}

const GridFunction& FunctionSeq::centered(int l) const {
    int s = slot(l);
    return s < 0 ? zero_.front() : centered_[static_cast<std::size_t>(s)];
}

FunctionSeq FunctionSeq::scaled(double c) const {
    FunctionSeq s;
    s.mode_ = mode_;
    s.space_ = space_;
    s.mu_ = mu_;
    for (const auto& f : raw_) s.raw_.push_back(f * c);
    s.finish();
    return s;
}

// ------------------------------------------------------ initial distribution

InitialDistribution InitialDistribution::parse(const std::string& text) {
    auto number = [&](std::string_view t) {
        double v = 0.0;
        auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (res.ec != std::errc() || res.ptr != t.data() + t.size())
            throw ConfigError("bad number '" + std::string(t) + "' in initial distribution '" + text + "'");
        return v;
    };
    if (text == "stationary") return stationary();
    std::string_view s = text;
    if (s.rfind("point:", 0) == 0) return point(number(s.substr(6)));
    if (s.rfind("beta:", 0) == 0) {
        auto rest = s.substr(5);
        auto comma = rest.find(',');
        if (comma == std::string_view::npos) throw ConfigError("beta initial distribution needs 'beta:A,B'");
        return beta(number(rest.substr(0, comma)), number(rest.substr(comma + 1)));
    }
    throw ConfigError("unknown initial distribution '" + text + "' (stationary, point:X, beta:A,B)");
}

std::string InitialDistribution::to_string() const {
    char buf[96];
    switch (kind) {
        case Kind::Stationary: return "stationary";
        case Kind::Point: std::snprintf(buf, sizeof buf, "point:%.17g", x); return buf;
        case Kind::Beta: std::snprintf(buf, sizeof buf, "beta:%.17g,%.17g", a, b); return buf;
    }
    return "stationary";
}

InitialSampler::InitialSampler(const InitialDistribution& nu, const BranchingKernel& kernel)
    : nu_(nu), space_(kernel.space_ptr()) {
    switch (nu.kind) {
        case InitialDistribution::Kind::Point:
            if (!space_->contains(nu.x)) throw ConfigError("initial point is not a state of the kernel's space");
            break;
        case InitialDistribution::Kind::Beta:
            if (space_->is_finite()) throw ConfigError("a Beta initial law needs a grid state space");
            if (!(nu.a > 0.0) || !(nu.b > 0.0)) throw ConfigError("Beta shapes must be positive");
            break;
        case InitialDistribution::Kind::Stationary: {
            exact_ = kernel.mean_operator().exact_stationary();
            if (!exact_) {
                Vector mu = invariant_measure(kernel.mean_operator());
                double acc = 0.0;
                for (Eigen::Index i = 0; i < mu.size(); ++i) cdf_.push_back(acc += mu[i]);
            }
            break;
        }
    }
}

State InitialSampler::draw(RandomStream& rng) const {
    switch (nu_.kind) {
        case InitialDistribution::Kind::Point: return nu_.x;
        case InitialDistribution::Kind::Beta: return rng.beta(nu_.a, nu_.b);
        case InitialDistribution::Kind::Stationary: break;
    }
    if (exact_) return exact_(rng);
    double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    auto j = std::min<std::ptrdiff_t>(it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1);
    return space_->nodes()[j];
}

// ------------------------------------------------------------------ sampling

int resolve_threads(int hint) {
    if (hint > 0) return hint;
    if (const char* env = std::getenv("BMC_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void validate(const EnsembleConfig& cfg) {
    if (cfg.replicas < 1) throw ConfigError("number of replicas must be at least 1");
    GenerationRange range(cfg.depth);
    (void)range;
    if (cfg.threads < 0) throw ConfigError("thread count must be nonnegative");
}

void sample_tree_into(const BranchingKernel& p, const InitialSampler& nu, int n, RandomStream& rng, TreeSample& out) {
    GenerationRange range(n);
    out.depth = n;
    out.kernel_id = p.id();
    out.states.resize(range.tree_size());
    State* x = out.states.data();
    x[0] = nu.draw(rng);
    const std::uint64_t parents = GenerationRange::offset(n);
    for (std::uint64_t i = 0; i < parents; ++i) {
        auto [a, b] = p.sample_pair(x[i], rng);
        x[2 * i + 1] = a;
        x[2 * i + 2] = b;
    }
}

TreeSample sample_tree(const BranchingKernel& p, const InitialSampler& nu, int n, RandomStream& rng) {
    TreeSample t;
    sample_tree_into(p, nu, n, rng, t);
    return t;
}

// --------------------------------------------------------------- functionals

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 64) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

namespace {

double sum_of(const GridFunction& f, const State* x, std::size_t count) {
    thread_local std::vector<double> buf;
    buf.resize(count);
    for (std::size_t i = 0; i < count; ++i) buf[i] = f.at(x[i]);
    return pairwise_sum(buf.data(), count);
}

void check_generation(const TreeSample& s, int k) {
    if (k < 0 || k > s.depth) throw ConfigError("generation " + std::to_string(k) + " outside the sampled tree");
}

}  // namespace

double m_generation(const TreeSample& s, const GridFunction& f, int k) {
    check_generation(s, k);
    return sum_of(f, s.generation(k), GenerationRange::generation_size(k));
}

double m_tree(const TreeSample& s, const GridFunction& f, int n) {
    check_generation(s, n);
    std::vector<double> parts;
    for (int k = 0; k <= n; ++k) parts.push_back(m_generation(s, f, k));
    return pairwise_sum(parts.data(), parts.size());
}

double m_subtree_generation(const TreeSample& s, const GridFunction& f, const NodeId& u, int d) {
    check_generation(s, u.generation() + d);
    const int g = u.generation() + d;
    const State* first = s.generation(g) + (u.path() << d);
    return sum_of(f, first, GenerationRange::generation_size(d));
}

double n_functional(const TreeSample& s, const FunctionSeq& fseq, int n) {
    return n_functional_at(s, fseq, NodeId::root(), n);
}

double n_functional_at(const TreeSample& s, const FunctionSeq& fseq, const NodeId& i, int n) {
    check_generation(s, n);
    if (i.generation() > n) throw ConfigError("node lies below generation n");
    const int top = n - i.generation();
    std::vector<double> parts;
    for (int l = 0; l <= top; ++l) {
        if (fseq.is_zero(l)) break;
        parts.push_back(m_subtree_generation(s, fseq.centered(l), i, top - l));
    }
    return pairwise_sum(parts.data(), parts.size()) * std::exp2(-0.5 * n);
}

}  // namespace bmc
