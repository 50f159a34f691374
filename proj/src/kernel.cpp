#include "bmc/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "bmc/error.hpp"
#include "bmc/expr.hpp"

namespace bmc {

namespace {

constexpr double kStochasticTol = 1e-10;
constexpr int kMinGridNodes = 8;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------- StateSpace

SpacePtr StateSpace::finite(int m) {
    if (m < 2) throw ConfigError("finite state space needs at least 2 states");
    auto s = std::shared_ptr<StateSpace>(new StateSpace());
    s->kind_ = Kind::Finite;
    s->nodes_ = Vector::LinSpaced(m, 0.0, m - 1.0);
    s->weights_ = Vector::Constant(m, 1.0 / m);
    return s;
}

SpacePtr StateSpace::uniform_grid(int nodes, Quadrature rule) {
    if (nodes < kMinGridNodes) throw ConfigError("grid too small: need at least " + std::to_string(kMinGridNodes) + " nodes");
    const double h = 1.0 / (nodes - 1);
    Vector w = Vector::Constant(nodes, h);
    if (rule == Quadrature::Trapezoid) {
        w[0] = w[nodes - 1] = h / 2;
    } else {
        const double c[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
        for (int i = 0; i < 3; ++i) w[i] = w[nodes - 1 - i] = c[i] * h;
    }
    w /= w.sum();
    Vector x = Vector::LinSpaced(nodes, 0.0, 1.0);
    return grid(std::move(x), std::move(w));
}

SpacePtr StateSpace::grid(Vector nodes, Vector weights) {
    if (nodes.size() < kMinGridNodes) throw ConfigError("grid too small");
    if (nodes.size() != weights.size()) throw ConfigError("grid nodes and weights differ in length");
    for (Eigen::Index i = 0; i < nodes.size(); ++i) {
        if (!(nodes[i] >= 0.0 && nodes[i] <= 1.0)) throw ConfigError("grid node outside [0, 1]");
        if (i > 0 && !(nodes[i] > nodes[i - 1])) throw ConfigError("grid nodes must be strictly increasing");
        if (!(weights[i] > 0.0)) throw ConfigError("grid weights must be positive");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-12) throw ConfigError("grid weights must sum to 1");
    auto s = std::shared_ptr<StateSpace>(new StateSpace());
    s->kind_ = Kind::Grid;
    s->nodes_ = std::move(nodes);
    s->weights_ = std::move(weights);
    return s;
}

bool StateSpace::contains(State s) const {
    if (kind_ == Kind::Finite) return s >= 0 && s < size() && s == std::floor(s);
    return s >= 0.0 && s <= 1.0;
}

int StateSpace::index_of(State s) const {
    if (kind_ == Kind::Finite) {
        if (!contains(s)) throw ConfigError("state " + fmt(s) + " is not in the finite space");
        return static_cast<int>(s);
    }
    const double* b = nodes_.data();
    const double* e = b + nodes_.size();
    const double* it = std::lower_bound(b, e, s);
    if (it != e && *it == s) return static_cast<int>(it - b);
    return -1;
}

bool StateSpace::same_as(const StateSpace& o) const {
    if (this == &o) return true;
    return kind_ == o.kind_ && nodes_.size() == o.nodes_.size() && nodes_ == o.nodes_ && weights_ == o.weights_;
}

// -------------------------------------------------------------- GridFunction

GridFunction::GridFunction(SpacePtr space, Vector values, Exact exact)
    : space_(std::move(space)), values_(std::move(values)), exact_(std::move(exact)) {
    if (values_.size() != space_->size()) throw ConfigError("function length does not match its state space");
    if (!values_.allFinite()) throw NumericalError("function has non-finite values");
}

GridFunction GridFunction::from(SpacePtr space, Exact fn) {
    Vector v(space->size());
    for (int i = 0; i < space->size(); ++i) v[i] = fn(space->nodes()[i]);
    if (space->is_finite()) return GridFunction(std::move(space), std::move(v));
    return GridFunction(std::move(space), std::move(v), std::move(fn));
}

GridFunction GridFunction::constant(SpacePtr space, double c) {
    return from(std::move(space), [c](double) { return c; });
}

GridFunction GridFunction::indicator(SpacePtr space, int state) {
    if (!space->is_finite() || state < 0 || state >= space->size()) throw ConfigError("indicator needs a state of a finite space");
    Vector v = Vector::Zero(space->size());
    v[state] = 1.0;
    return GridFunction(std::move(space), std::move(v));
}

double GridFunction::at(State s) const {
    if (space_->is_finite()) return values_[space_->index_of(s)];
    if (exact_) return exact_(s);
    const Vector& x = space_->nodes();
    if (s <= x[0]) return values_[0];
    const Eigen::Index n = x.size();
    if (s >= x[n - 1]) return values_[n - 1];
    auto it = std::upper_bound(x.data(), x.data() + n, s);
    Eigen::Index j = it - x.data();
    double t = (s - x[j - 1]) / (x[j] - x[j - 1]);
    return (1 - t) * values_[j - 1] + t * values_[j];
}

namespace {
void require_same_space(const GridFunction& a, const GridFunction& b) {
    if (!a.space().same_as(b.space())) throw ConfigError("functions live on different state spaces");
}
}  // namespace

GridFunction GridFunction::operator+(const GridFunction& o) const {
    require_same_space(*this, o);
    Exact e;
    if (exact_ && o.exact_) e = [a = exact_, b = o.exact_](double x) { return a(x) + b(x); };
    return GridFunction(space_, values_ + o.values_, std::move(e));
}

GridFunction GridFunction::operator-(const GridFunction& o) const {
    require_same_space(*this, o);
    Exact e;
    if (exact_ && o.exact_) e = [a = exact_, b = o.exact_](double x) { return a(x) - b(x); };
    return GridFunction(space_, values_ - o.values_, std::move(e));
}

GridFunction GridFunction::operator*(const GridFunction& o) const {
    require_same_space(*this, o);
    Exact e;
    if (exact_ && o.exact_) e = [a = exact_, b = o.exact_](double x) { return a(x) * b(x); };
    return GridFunction(space_, values_.cwiseProduct(o.values_), std::move(e));
}

GridFunction GridFunction::operator*(double c) const {
    Exact e;
    if (exact_) e = [a = exact_, c](double x) { return c * a(x); };
    return GridFunction(space_, values_ * c, std::move(e));
}

GridFunction GridFunction::shifted(double c) const {
    Exact e;
    if (exact_) e = [a = exact_, c](double x) { return a(x) + c; };
    return GridFunction(space_, values_.array() + c, std::move(e));
}

// ------------------------------------------------------------ MarkovOperator

MarkovOperator::MarkovOperator(SpacePtr space, Matrix k, std::string id)
    : space_(std::move(space)), k_(std::move(k)), id_(std::move(id)) {
    const Eigen::Index n = k_.rows();
    cdf_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            acc += k_(i, j);
            cdf_(i, j) = acc;
        }
    }
}

MarkovOperator MarkovOperator::from_matrix(SpacePtr space, Matrix k, std::string id) {
    if (k.rows() != space->size() || k.cols() != space->size()) throw ConfigError("transition matrix does not match the state space");
    if (!k.allFinite() || k.minCoeff() < 0.0) throw ConfigError("transition matrix has negative or non-finite entries");
    for (Eigen::Index i = 0; i < k.rows(); ++i)
        if (std::abs(k.row(i).sum() - 1.0) > kStochasticTol) throw ConfigError("transition matrix row " + std::to_string(i) + " does not sum to 1");
    return MarkovOperator(std::move(space), std::move(k), std::move(id));
}

MarkovOperator MarkovOperator::from_density(SpacePtr grid, Density density, std::string id) {
    if (grid->is_finite()) throw ConfigError("densities need a grid state space");
    const int n = grid->size();
    const Vector& x = grid->nodes();
    const Vector& w = grid->weights();
    Matrix k(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double d = density(x[i], x[j]);
            if (!std::isfinite(d) || d < 0.0) throw ConfigError("kernel density is negative or non-finite at (" + fmt(x[i]) + ", " + fmt(x[j]) + ")");
            k(i, j) = d * w[j];
        }
        double s = k.row(i).sum();
        if (!(s > 0.0)) throw ConfigError("kernel density has zero mass from x = " + fmt(x[i]));
        k.row(i) /= s;
    }
    MarkovOperator q(std::move(grid), std::move(k), std::move(id));
    q.density_ = std::move(density);
    return q;
}

GridFunction MarkovOperator::apply(const GridFunction& f) const {
    if (!f.space().same_as(*space_)) throw ConfigError("function and operator live on different state spaces");
    return GridFunction(space_, k_ * f.values());
}

Vector MarkovOperator::row_at(State s) const {
    int idx = space_->index_of(s);
    if (idx >= 0) return k_.row(idx).transpose();
    if (!density_) throw ConfigError("off-grid state " + fmt(s) + " needs a kernel with a density");
    if (!space_->contains(s)) throw ConfigError("state " + fmt(s) + " outside [0, 1]");
    const Vector& y = space_->nodes();
    const Vector& w = space_->weights();
    Vector r(y.size());
    for (Eigen::Index j = 0; j < y.size(); ++j) r[j] = density_(s, y[j]) * w[j];
    return r / r.sum();
}

State MarkovOperator::sample_from_row(const double* cdf, RandomStream& rng) const {
    const Eigen::Index n = k_.cols();
    double u = rng.uniform() * cdf[n - 1];
    const double* it = std::upper_bound(cdf, cdf + n, u);
    Eigen::Index j = std::min<Eigen::Index>(it - cdf, n - 1);
    return space_->nodes()[j];
}

State MarkovOperator::sample(State s, RandomStream& rng) const {
    if (sampler_ == Sampler::BetaMixture) {
        double pick = rng.uniform();
        Beta23Pair b = draw_beta23_pair(rng);
        return pick < s ? b.beta32 : b.beta23;
    }
    int idx = space_->index_of(s);
    if (idx >= 0) return sample_from_row(cdf_.row(idx).data(), rng);
    Vector r = row_at(s);
    for (Eigen::Index j = 1; j < r.size(); ++j) r[j] += r[j - 1];
    return sample_from_row(r.data(), rng);
}

GridFunction iterate_apply(const MarkovOperator& q, const GridFunction& f, int k) {
    if (k < 0) throw ConfigError("operator power must be nonnegative");
    if (k == 0) return f;
    Vector v = f.values();
    for (int i = 0; i < k; ++i) v = q.matrix() * v;
    return GridFunction(f.space_ptr(), std::move(v));
}

// ------------------------------------------------------- invariant measure

bool is_primitive_on_support(const MarkovOperator& q) {
    const Matrix& k = q.matrix();
    const Eigen::Index n = k.rows();
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < n; ++j)
        if (k.col(j).maxCoeff() > 0.0) support.push_back(j);
    const auto m = static_cast<Eigen::Index>(support.size());
    Matrix a(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) a(i, j) = k(support[i], support[j]) > 0.0 ? 1.0 : 0.0;
    // Wielandt: a primitive m x m pattern has A^t > 0 for t = (m-1)^2 + 1.
    const double wielandt = static_cast<double>(m - 1) * static_cast<double>(m - 1) + 1.0;
    for (double t = 1; ; t *= 2) {
        if (a.minCoeff() > 0.0) return true;
        if (t >= wielandt) return false;
        a = (a * a).unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    }
}

Vector invariant_measure(const MarkovOperator& q) {
    if (!is_primitive_on_support(q)) throw NumericalError("transition operator is reducible or periodic; no unique invariant measure");
    const Matrix& k = q.matrix();
    const Eigen::Index n = k.rows();
    Vector mu = q.space().is_finite() ? Vector::Constant(n, 1.0 / n) : q.space().weights();
    const Matrix kt = k.transpose();
    constexpr int kBudget = 100000;
    for (int it = 0; it < kBudget; ++it) {
        Vector next = kt * mu;
        next /= next.sum();
        double tv = 0.5 * (next - mu).cwiseAbs().sum();
        mu = std::move(next);
        if (tv < 1e-12) {
            // A couple of extra sweeps push the fixed-point residual well below
            // the stopping threshold.
            for (int extra = 0; extra < 4; ++extra) {
                mu = kt * mu;
                mu /= mu.sum();
            }
            return mu;
        }
    }
    throw NumericalError("invariant measure did not converge within the iteration budget");
}

GridFunction center(const GridFunction& f, const Vector& mu) {
    const Vector& v = f.values();
    if (v.size() > 0 && v.maxCoeff() == v.minCoeff()) return GridFunction::constant(f.space_ptr(), 0.0);
    return f.shifted(-inner(mu, f));
}

// ------------------------------------------------------------------ spectrum

namespace {

// Perron eigenvalue first, the rest by decreasing modulus; ties broken by
// real part then imaginary part so the order is deterministic.
std::vector<int> spectral_order(const CVector& ev) {
    std::vector<int> idx(static_cast<std::size_t>(ev.size()));
    for (int i = 0; i < ev.size(); ++i) idx[i] = i;
    int perron = 0;
    for (int i = 1; i < ev.size(); ++i)
        if (std::abs(ev[i] - 1.0) < std::abs(ev[perron] - 1.0)) perron = i;
    std::swap(idx[0], idx[perron]);
    std::sort(idx.begin() + 1, idx.end(), [&](int a, int b) {
        double ma = std::abs(ev[a]), mb = std::abs(ev[b]);
        if (ma != mb) return ma > mb;
        if (ev[a].real() != ev[b].real()) return ev[a].real() > ev[b].real();
        return ev[a].imag() > ev[b].imag();
    });
    return idx;
}

std::vector<GridFunction> default_probes(const SpacePtr& space) {
    std::vector<GridFunction> probes;
    if (space->is_finite()) {
        for (int s = 0; s < std::min(space->size(), 64); ++s) probes.push_back(GridFunction::indicator(space, s));
        return probes;
    }
    probes.push_back(GridFunction::from(space, [](double x) { return x; }));
    probes.push_back(GridFunction::from(space, [](double x) { return x * x; }));
    probes.push_back(GridFunction::from(space, [](double x) { return x * x * x; }));
    for (double c : {0.25, 0.5, 0.75}) probes.push_back(GridFunction::from(space, [c](double x) { return x < c ? 1.0 : 0.0; }));
    return probes;
}

double estimate_m(const MarkovOperator& q, const Vector& mu, double alpha, const std::vector<GridFunction>& extra) {
    std::vector<GridFunction> probes = default_probes(q.space_ptr());
    probes.insert(probes.end(), extra.begin(), extra.end());
    double m = 0.0;
    for (const GridFunction& f : probes) {
        double fn = f.sup_norm();
        if (fn == 0.0) continue;
        Vector g = f.values().array() - inner(mu, f);
        double scale = 1.0;  // alpha^n
        for (int n = 0; n <= 30; ++n) {
            double gn = g.cwiseAbs().maxCoeff();
            if (n > 0 && (alpha == 0.0 || gn < 1e-12 * fn)) break;
            m = std::max(m, gn / (scale * fn));
            g = q.matrix() * g;
            scale *= alpha;
        }
    }
    return m;
}

double second_modulus(const std::vector<Complex>& sorted) {
    if (sorted.size() < 2) return 0.0;
    double a = std::abs(sorted[1]);
    return a < 1e-14 ? 0.0 : a;
}

}  // namespace

std::vector<Complex> eigenvalues(const MarkovOperator& q) {
    Eigen::EigenSolver<Matrix> es(q.matrix(), false);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    CVector ev = es.eigenvalues();
    std::vector<Complex> out;
    for (int i : spectral_order(ev)) out.push_back(ev[i]);
    return out;
}

ErgodicityRate ergodicity_rate(const MarkovOperator& q, const Vector& mu, const std::vector<GridFunction>& extra_probes) {
    ErgodicityRate r;
    r.alpha = second_modulus(eigenvalues(q));
    if (r.alpha >= 1.0 - 1e-10) {
        r.alpha = 1.0;
        r.degenerate = true;
        r.m_estimate = std::numeric_limits<double>::infinity();
        return r;
    }
    r.m_estimate = estimate_m(q, mu, r.alpha, extra_probes);
    return r;
}

ErgodicityRate ergodicity_rate(const MarkovOperator& q) {
    double alpha = second_modulus(eigenvalues(q));
    if (alpha >= 1.0 - 1e-10) return {1.0, std::numeric_limits<double>::infinity(), true};
    return ergodicity_rate(q, invariant_measure(q));
}

double ergodicity_constant(const MarkovOperator& q, const Vector& mu, double alpha,
                           const std::vector<GridFunction>& extra_probes) {
    return estimate_m(q, mu, alpha, extra_probes);
}

namespace {

double op_norm_inf(const CMatrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

SpectralData spectral_projectors(const MarkovOperator& q, const std::vector<GridFunction>& extra_probes) {
    SpectralData sd;
    sd.mu = invariant_measure(q);
    const Matrix& k = q.matrix();
    Eigen::EigenSolver<Matrix> right(k, true);
    Eigen::EigenSolver<Matrix> left(k.transpose(), true);
    if (right.info() != Eigen::Success || left.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    const CVector ev = right.eigenvalues();
    const CVector evl = left.eigenvalues();
    std::vector<int> order = spectral_order(ev);
    for (int i : order) sd.eigenvalues.push_back(ev[i]);
    sd.alpha = second_modulus(sd.eigenvalues);
    if (sd.alpha >= 1.0 - 1e-10) throw NumericalError("second eigenvalue has modulus 1; no spectral gap");
    sd.ergodicity_constant = estimate_m(q, sd.mu, sd.alpha, extra_probes);
    if (sd.alpha == 0.0) return sd;

    const double cluster_tol = 1e-8;
    std::vector<bool> used(order.size(), false);
    for (std::size_t a = 1; a < order.size(); ++a) {
        const Complex lam = sd.eigenvalues[a];
        if (std::abs(std::abs(lam) - sd.alpha) > 1e-9) break;
        if (used[a]) continue;
        // Gather the right eigenvectors of this eigenvalue.
        std::vector<int> cols;
        for (std::size_t b = a; b < order.size(); ++b) {
            if (!used[b] && std::abs(sd.eigenvalues[b] - lam) <= cluster_tol) {
                used[b] = true;
                cols.push_back(order[b]);
            }
        }
        std::vector<int> lcols;
        for (int i = 0; i < evl.size(); ++i)
            if (std::abs(evl[i] - lam) <= cluster_tol) lcols.push_back(i);
        if (lcols.size() != cols.size()) throw NumericalError("left and right eigenspaces differ in dimension; defective eigenvalue at modulus alpha");
        const auto r = static_cast<Eigen::Index>(cols.size());
        CMatrix v(k.rows(), r), w(k.rows(), r);
        for (Eigen::Index c = 0; c < r; ++c) {
            v.col(c) = right.eigenvectors().col(cols[c]);
            w.col(c) = left.eigenvectors().col(lcols[c]);
        }
        CMatrix g = w.transpose() * v;
        Eigen::JacobiSVD<CMatrix> svd(g);
        const auto& s = svd.singularValues();
        if (s[s.size() - 1] <= 1e-10 * s[0]) throw NumericalError("defective eigenvalue at modulus alpha; projector unavailable");
        Projector p;
        p.eigenvalue = lam;
        p.theta = lam / sd.alpha;
        p.matrix = v * g.inverse() * w.transpose();
        const CMatrix kc = k.cast<Complex>();
        if (op_norm_inf(p.matrix * p.matrix - p.matrix) > 1e-8 * std::max(1.0, op_norm_inf(p.matrix)) ||
            op_norm_inf(kc * p.matrix - lam * p.matrix) > 1e-8 * std::max(1.0, op_norm_inf(p.matrix)))
            throw NumericalError("projector check failed; eigenvalue at modulus alpha is ill-conditioned");
        sd.J.push_back(static_cast<int>(a));
        sd.projectors.push_back(std::move(p));
    }
    return sd;
}

GridFunction center_hat(const GridFunction& f, const SpectralData& spectral, int n) {
    GridFunction ft = center(f, spectral.mu);
    if (spectral.projectors.empty()) {
        if (spectral.alpha > 0.0) throw NumericalError("spectral projectors unavailable");
        return ft;
    }
    CVector acc = CVector::Zero(f.values().size());
    for (const Projector& p : spectral.projectors) acc += std::pow(p.theta, n) * p.apply(f.values());
    if (acc.imag().cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, acc.cwiseAbs().maxCoeff()))
        throw NumericalError("projector sum has a non-negligible imaginary part");
    Vector v = ft.values() - std::pow(spectral.alpha, n) * acc.real();
    return GridFunction(f.space_ptr(), std::move(v));
}

// ----------------------------------------------------------- BranchingKernel

BranchingKernel BranchingKernel::product(MarkovOperator q) { return BranchingKernel(std::move(q)); }

BranchingKernel BranchingKernel::joint(SpacePtr space, std::vector<Matrix> joint, std::string id) {
    if (!space->is_finite()) throw ConfigError("joint pair kernels are supported on finite spaces only");
    const int m = space->size();
    if (static_cast<int>(joint.size()) != m) throw ConfigError("joint kernel needs one pair matrix per state");
    Matrix q(m, m);
    for (int x = 0; x < m; ++x) {
        const Matrix& jx = joint[x];
        if (jx.rows() != m || jx.cols() != m) throw ConfigError("joint pair matrix has the wrong shape");
        if (!jx.allFinite() || jx.minCoeff() < 0.0) throw ConfigError("joint pair matrix has negative entries");
        if (std::abs(jx.sum() - 1.0) > kStochasticTol) throw ConfigError("joint pair law from state " + std::to_string(x) + " does not sum to 1");
        q.row(x) = 0.5 * (jx.rowwise().sum() + jx.colwise().sum().transpose()).transpose();
    }
    BranchingKernel p(MarkovOperator::from_matrix(space, q, id));
    p.joint_ = std::move(joint);
    p.joint_cdf_.resize(m, static_cast<Eigen::Index>(m) * m);
    for (int x = 0; x < m; ++x) {
        double acc = 0.0;
        for (int y = 0; y < m; ++y)
            for (int z = 0; z < m; ++z) {
                acc += p.joint_[x](y, z);
                p.joint_cdf_(x, y * m + z) = acc;
            }
    }
    return p;
}

std::pair<MarkovOperator, MarkovOperator> BranchingKernel::marginals() const {
    if (is_product()) return {q_, q_};
    const int m = q_.size();
    Matrix p0(m, m), p1(m, m);
    for (int x = 0; x < m; ++x) {
        p0.row(x) = joint_[x].rowwise().sum().transpose();
        p1.row(x) = joint_[x].colwise().sum();
    }
    return {MarkovOperator::from_matrix(q_.space_ptr(), p0, id_ + ":P0"),
            MarkovOperator::from_matrix(q_.space_ptr(), p1, id_ + ":P1")};
}

Vector BranchingKernel::apply_bivariate(const Matrix& g) const {
    const int n = q_.size();
    if (g.rows() != n || g.cols() != n) throw ConfigError("bivariate function does not match the state space");
    if (is_product()) {
        const Matrix& k = q_.matrix();
        return (k * g).cwiseProduct(k).rowwise().sum();
    }
    Vector out(n);
    for (int x = 0; x < n; ++x) out[x] = joint_[x].cwiseProduct(g).sum();
    return out;
}

Vector BranchingKernel::apply_pair(const Vector& u, const Vector& v) const {
    if (is_product()) return q_.apply(u).cwiseProduct(q_.apply(v));
    Vector out(q_.size());
    for (int x = 0; x < q_.size(); ++x) out[x] = u.dot(joint_[x] * v);
    return out;
}

CVector BranchingKernel::apply_pair(const CVector& u, const CVector& v) const {
    if (is_product()) return q_.apply(u).cwiseProduct(q_.apply(v));
    CVector out(q_.size());
    for (int x = 0; x < q_.size(); ++x) out[x] = (u.transpose() * (joint_[x].cast<Complex>() * v))(0, 0);
    return out;
}

Vector BranchingKernel::apply_pair_sym(const Vector& u, const Vector& v) const {
    if (is_product()) return apply_pair(u, v);
    return 0.5 * (apply_pair(u, v) + apply_pair(v, u));
}

CVector BranchingKernel::apply_pair_sym(const CVector& u, const CVector& v) const {
    if (is_product()) return apply_pair(u, v);
    return 0.5 * (apply_pair(u, v) + apply_pair(v, u));
}

double BranchingKernel::pair_at(const Vector& u, const Vector& v, State x, const Vector& q_row) const {
    if (is_product()) return q_row.dot(u) * q_row.dot(v);
    int idx = q_.space().index_of(x);
    return u.dot(joint_[idx] * v);
}

std::pair<State, State> BranchingKernel::sample_pair(State x, RandomStream& rng) const {
    if (is_product()) {
        State a = q_.sample(x, rng);
        State b = q_.sample(x, rng);
        return {a, b};
    }
    const int m = q_.size();
    const int idx = q_.space().index_of(x);
    const double* cdf = joint_cdf_.row(idx).data();
    const int mm = m * m;
    double u = rng.uniform() * cdf[mm - 1];
    int k = static_cast<int>(std::upper_bound(cdf, cdf + mm, u) - cdf);
    k = std::min(k, mm - 1);
    return {static_cast<double>(k / m), static_cast<double>(k % m)};
}

// ------------------------------------------------------------------ builtins

double critical_two_state_p() { return (2.0 + std::sqrt(2.0)) / 4.0; }

BranchingKernel beta_mixture_kernel(int grid_nodes, Quadrature rule) {
    auto grid = StateSpace::uniform_grid(grid_nodes, rule);
    // 1 / B(2,3) = 1 / B(3,2) = 12
    auto density = [](double x, double y) {
        return (1.0 - x) * 12.0 * y * (1.0 - y) * (1.0 - y) + x * 12.0 * y * y * (1.0 - y);
    };
    auto q = MarkovOperator::from_density(grid, density, "beta_mixture(nodes=" + std::to_string(grid_nodes) + ")");
    q.use_beta_mixture_sampler();
    q.set_exact_stationary([](RandomStream& rng) { return rng.beta(2.0, 2.0); });
    return BranchingKernel::product(std::move(q));
}

BranchingKernel two_state_kernel(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("two_state stay probability must lie in [0, 1]");
    Matrix k(2, 2);
    k << p, 1.0 - p, 1.0 - p, p;
    return BranchingKernel::product(MarkovOperator::from_matrix(StateSpace::finite(2), k, "two_state(p=" + fmt(p) + ")"));
}

BranchingKernel grid_custom_kernel(const std::string& density, int grid_nodes, Quadrature rule) {
    auto ast = expr::parse(density, true);
    auto compiled = std::make_shared<expr::Compiled>(*ast);
    auto grid = StateSpace::uniform_grid(grid_nodes, rule);
    return BranchingKernel::product(MarkovOperator::from_density(
        grid, [compiled](double x, double y) { return (*compiled)(x, y); },
        "grid_custom(" + expr::print(*ast) + ", nodes=" + std::to_string(grid_nodes) + ")"));
}

BranchingKernel builtin_kernel(const std::string& name, const KernelParams& params) {
    if (name == "beta_mixture") return beta_mixture_kernel(params.grid_nodes, params.quadrature);
    if (name == "two_state") return two_state_kernel(params.p);
    if (name == "grid_custom") {
        if (params.density.empty()) throw ConfigError("grid_custom needs a density expression");
        return grid_custom_kernel(params.density, params.grid_nodes, params.quadrature);
    }
    throw ConfigError("unknown kernel '" + name + "'");
}

}  // namespace bmc
