#include "bmc/moments.hpp"

#include <cmath>

#include "bmc/error.hpp"
#include "bmc/tree.hpp"

namespace bmc {

OracleForm::OracleForm(const BranchingKernel& p) : p_(&p), lin_(Vector::Zero(p.space().size())) {}

void OracleForm::add_row_term(const Vector& v, double coef) { lin_ += coef * v; }

void OracleForm::add_pair_term(double coef, const Vector& u, const Vector& v) { pairs_.push_back({coef, u, v}); }

void OracleForm::add_point_term(double coef, Linear a, std::optional<Linear> b) {
    points_.push_back({coef, std::move(a), std::move(b)});
}

OracleForm& OracleForm::operator+=(const OracleForm& o) {
    lin_ += o.lin_;
    pairs_.insert(pairs_.end(), o.pairs_.begin(), o.pairs_.end());
    points_.insert(points_.end(), o.points_.begin(), o.points_.end());
    return *this;
}

double OracleForm::operator()(State x) const {
    const Vector row = p_->mean_operator().row_at(x);
    double s = row.dot(lin_);
    for (const Pair& t : pairs_) {
        double a = p_->pair_at(t.u, t.v, x, row);
        double b = p_->is_product() ? a : p_->pair_at(t.v, t.u, x, row);
        s += t.coef * 0.5 * (a + b);
    }
    for (const Point& t : points_) {
        double v = t.a.at(x, row);
        if (t.b) v *= t.b->at(x, row);
        s += t.coef * v;
    }
    return s;
}

Vector OracleForm::on_nodes() const {
    const Vector& x = p_->space().nodes();
    Vector out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = (*this)(x[i]);
    return out;
}

namespace {

void check_orders(int n, int m) {
    if (m < 0 || n < m) throw ConfigError("moment orders need n >= m >= 0");
}

// Powers Q^k f for k = 0..kmax.
std::vector<Vector> powers(const MarkovOperator& q, const Vector& f, int kmax) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(kmax) + 1);
    out.push_back(f);
    for (int k = 1; k <= kmax; ++k) out.push_back(q.apply(out.back()));
    return out;
}

// (Q^k f)(x) as a Linear evaluator.
OracleForm::Linear power_at(const GridFunction& f, const std::vector<Vector>& pw, int k) {
    if (k == 0) return {f, Vector()};
    return {std::nullopt, pw[static_cast<std::size_t>(k) - 1]};
}

}  // namespace

OracleForm mean_form(const BranchingKernel& p, const GridFunction& f, int n) {
    check_orders(n, 0);
    OracleForm form(p);
    const double scale = std::ldexp(1.0, n);
    if (n == 0) {
        form.add_point_term(1.0, {f, Vector()});
        return form;
    }
    auto pw = powers(p.mean_operator(), f.values(), n - 1);
    form.add_row_term(pw.back(), scale);
    return form;
}

OracleForm cross_form(const BranchingKernel& p, const GridFunction& f, const GridFunction& g, int n, int m) {
    check_orders(n, m);
    if (!f.space().same_as(p.space()) || !g.space().same_as(p.space()))
        throw ConfigError("functions and kernel live on different state spaces");
    const MarkovOperator& q = p.mean_operator();
    OracleForm form(p);
    auto pf = powers(q, f.values(), n);
    auto pg = powers(q, g.values(), m);

    // 2^n Q^m(g · Q^{n-m} f)
    const double top = std::ldexp(1.0, n);
    if (m == 0) {
        form.add_point_term(top, {g, Vector()}, power_at(f, pf, n));
    } else {
        Vector w = g.values().cwiseProduct(pf[static_cast<std::size_t>(n - m)]);
        auto pw = powers(q, w, m - 1);
        form.add_row_term(pw.back(), top);
    }
    // Σ_{k<m} 2^{n+k} Q^{m-k-1} P(Q^k g ⊗_sym Q^{n-m+k} f)
    for (int k = 0; k < m; ++k) {
        const double c = std::ldexp(1.0, n + k);
        const Vector& u = pg[static_cast<std::size_t>(k)];
        const Vector& v = pf[static_cast<std::size_t>(n - m + k)];
        const int j = m - k - 1;
        if (j == 0) {
            form.add_pair_term(c, u, v);
        } else {
            Vector w = p.apply_pair_sym(u, v);
            auto pw = powers(q, w, j - 1);
            form.add_row_term(pw.back(), c);
        }
    }
    return form;
}

OracleForm second_form(const BranchingKernel& p, const GridFunction& f, int n) { return cross_form(p, f, f, n, n); }

double mean_oracle(const BranchingKernel& p, const GridFunction& f, int n, State x) { return mean_form(p, f, n)(x); }

double second_moment_oracle(const BranchingKernel& p, const GridFunction& f, int n, State x) {
    return second_form(p, f, n)(x);
}

double cross_moment_oracle(const BranchingKernel& p, const GridFunction& f, const GridFunction& g, int n, int m, State x) {
    return cross_form(p, f, g, n, m)(x);
}

// ---------------------------------------------------------------- brute force

double brute_force_moment(const BranchingKernel& p, const MomentRequest& req, std::uint64_t max_assignments) {
    if (!p.space().is_finite()) throw ConfigError("brute-force moments need a finite state space");
    const int ms = p.space().size();
    int depth = req.n;
    if (req.kind == MomentRequest::Kind::Cross) {
        check_orders(req.n, req.m);
        if (!req.g) throw ConfigError("cross moment needs a second function");
    } else if (req.n < 0) {
        throw ConfigError("moment order must be nonnegative");
    }
    if (req.x.has_value() == req.nu.has_value()) throw ConfigError("give exactly one of a start state or a start law");
    GenerationRange range(depth);
    const std::uint64_t nodes = range.tree_size();
    double log_count = static_cast<double>(nodes) * std::log2(static_cast<double>(ms));
    if (log_count > std::log2(static_cast<double>(max_assignments)))
        throw ConfigError("enumeration budget exceeded: " + std::to_string(ms) + "^" + std::to_string(nodes) + " assignments");

    Vector start = Vector::Zero(ms);
    if (req.x) start[p.space().index_of(*req.x)] = 1.0;
    else {
        if (req.nu->size() != ms) throw ConfigError("start law does not match the state space");
        start = *req.nu;
    }

    const Vector& fv = req.f.values();
    const Vector& gv = req.g ? req.g->values() : fv;
    const Matrix& q = p.mean_operator().matrix();
    // P(x, {(y, z)}) recovered through apply_bivariate on indicators.
    std::vector<Matrix> joint;
    if (!p.is_product()) {
        joint.assign(static_cast<std::size_t>(ms), Matrix::Zero(ms, ms));
        Matrix e = Matrix::Zero(ms, ms);
        for (int y = 0; y < ms; ++y)
            for (int z = 0; z < ms; ++z) {
                e.setZero();
                e(y, z) = 1.0;
                Vector col = p.apply_bivariate(e);
                for (int x = 0; x < ms; ++x) joint[static_cast<std::size_t>(x)](y, z) = col[x];
            }
    }
    auto pair_prob = [&](int x, int y, int z) {
        if (p.is_product()) return q(x, y) * q(x, z);
        return joint[static_cast<std::size_t>(x)](y, z);
    };

    std::vector<int> state(nodes, 0);
    const std::uint64_t parents = GenerationRange::offset(depth);
    double total = 0.0;
    auto leaf_value = [&]() {
        auto msum = [&](const Vector& h, int k) {
            double s = 0.0;
            for (std::uint64_t i = GenerationRange::offset(k); i < GenerationRange::offset(k + 1); ++i) s += h[state[i]];
            return s;
        };
        switch (req.kind) {
            case MomentRequest::Kind::Mean: return msum(fv, req.n);
            case MomentRequest::Kind::Second: {
                double a = msum(fv, req.n);
                return a * a;
            }
            case MomentRequest::Kind::Cross: return msum(fv, req.n) * msum(gv, req.m);
        }
        return 0.0;
    };
    // Depth-first over parents in heap order; each parent picks its pair.
    auto rec = [&](auto&& self, std::uint64_t parent, double w) -> void {
        if (w == 0.0) return;
        if (parent == parents) {
            total += w * leaf_value();
            return;
        }
        const int x = state[parent];
        for (int y = 0; y < ms; ++y)
            for (int z = 0; z < ms; ++z) {
                double pr = pair_prob(x, y, z);
                if (pr == 0.0) continue;
                state[2 * parent + 1] = y;
                state[2 * parent + 2] = z;
                self(self, parent + 1, w * pr);
            }
    };
    for (int r = 0; r < ms; ++r) {
        if (start[r] == 0.0) continue;
        state[0] = r;
        rec(rec, 0, start[r]);
    }
    return total;
}

}  // namespace bmc
