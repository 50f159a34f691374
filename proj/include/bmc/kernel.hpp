#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bmc/random.hpp"

namespace bmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;

/// A state is a double: the state index for finite spaces, a point of [0, 1]
/// for grid-discretized spaces.
using State = double;

enum class Quadrature {
    Trapezoid,
    /// Trapezoid with Gregory end corrections (O(h^4)); the default.
    Gregory,
};

class StateSpace {
public:
    enum class Kind { Finite, Grid };

    static std::shared_ptr<const StateSpace> finite(int m);
    static std::shared_ptr<const StateSpace> uniform_grid(int nodes, Quadrature rule = Quadrature::Gregory);
    static std::shared_ptr<const StateSpace> grid(Vector nodes, Vector weights);

    Kind kind() const { return kind_; }
    bool is_finite() const { return kind_ == Kind::Finite; }
    int size() const { return static_cast<int>(nodes_.size()); }
    /// Abscissas (grid) or 0, 1, ..., m-1 (finite).
    const Vector& nodes() const { return nodes_; }
    /// Quadrature weights; unused for finite spaces.
    const Vector& weights() const { return weights_; }

    bool contains(State s) const;
    /// Position of `s` among the nodes, or -1 for an off-node point of a grid.
    int index_of(State s) const;

    bool same_as(const StateSpace& other) const;

private:
    StateSpace() = default;
    Kind kind_ = Kind::Finite;
    Vector nodes_;
    Vector weights_;
};

using SpacePtr = std::shared_ptr<const StateSpace>;

/// Real function on a state space: values at the nodes plus, optionally, a
/// closed form used to evaluate it at off-node states.
class GridFunction {
public:
    using Exact = std::function<double(double)>;

    GridFunction(SpacePtr space, Vector values, Exact exact = {});

    static GridFunction from(SpacePtr space, Exact fn);
    static GridFunction constant(SpacePtr space, double c);
    /// Indicator of one state of a finite space.
    static GridFunction indicator(SpacePtr space, int state);

    const StateSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }
    const Vector& values() const { return values_; }
    bool has_exact() const { return static_cast<bool>(exact_); }

    /// Value at a state: node value on finite spaces and grid nodes, the
    /// closed form elsewhere, linear interpolation as a last resort.
    double at(State s) const;
    double sup_norm() const { return values_.cwiseAbs().maxCoeff(); }

    GridFunction operator+(const GridFunction& o) const;
    GridFunction operator-(const GridFunction& o) const;
    GridFunction operator*(const GridFunction& o) const;
    GridFunction operator*(double c) const;
    GridFunction shifted(double c) const;

private:
    SpacePtr space_;
    Vector values_;
    Exact exact_;
};

/// Transition operator Q on a finite or grid space, with its sampler.
class MarkovOperator {
public:
    using Density = std::function<double(double, double)>;

    /// Rows must be nonnegative and sum to 1 within 1e-10.
    static MarkovOperator from_matrix(SpacePtr space, Matrix k, std::string id);
    /// K[i][j] = density(x_i, y_j) w_j, each row renormalized to sum to 1.
    static MarkovOperator from_density(SpacePtr grid, Density density, std::string id);

    const StateSpace& space() const { return *space_; }
    const SpacePtr& space_ptr() const { return space_; }
    const Matrix& matrix() const { return k_; }
    const std::string& id() const { return id_; }
    int size() const { return static_cast<int>(k_.rows()); }

    GridFunction apply(const GridFunction& f) const;
    Vector apply(const Vector& f) const { return k_ * f; }
    CVector apply(const CVector& f) const { return k_.cast<Complex>() * f; }

    /// Transition weights from an arbitrary state (off-node grid states use
    /// the density).
    Vector row_at(State s) const;

    State sample(State s, RandomStream& rng) const;

    /// Replace the generic inverse-CDF sampler with the exact two-component
    /// Beta mixture (1-x) Beta(2,3) + x Beta(3,2).
    void use_beta_mixture_sampler() { sampler_ = Sampler::BetaMixture; }

    /// Exact draw from the stationary law, when one is known in closed form.
    using StationarySampler = std::function<State(RandomStream&)>;
    void set_exact_stationary(StationarySampler s) { stationary_ = std::move(s); }
    const StationarySampler& exact_stationary() const { return stationary_; }

private:
    enum class Sampler { RowInverseCdf, BetaMixture };

    MarkovOperator(SpacePtr space, Matrix k, std::string id);
    State sample_from_row(const double* cdf, RandomStream& rng) const;

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    SpacePtr space_;
    Matrix k_;
    RowMajor cdf_;  // cumulative sums, one row per state
    Density density_;
    std::string id_;
    Sampler sampler_ = Sampler::RowInverseCdf;
    StationarySampler stationary_;
};

GridFunction iterate_apply(const MarkovOperator& q, const GridFunction& f, int k);

/// ⟨mu, f⟩ with mu given as a mass vector over the nodes.
inline double inner(const Vector& mu, const Vector& f) { return mu.dot(f); }
inline double inner(const Vector& mu, const GridFunction& f) { return mu.dot(f.values()); }

/// Left fixed point of Q by power iteration on the adjoint. Throws
/// NumericalError if Q is not primitive on its support or the iteration
/// budget runs out.
Vector invariant_measure(const MarkovOperator& q);

/// True iff Q restricted to the states with positive inflow has a strictly
/// positive power and every state leads there.
bool is_primitive_on_support(const MarkovOperator& q);

GridFunction center(const GridFunction& f, const Vector& mu);

struct ErgodicityRate {
    double alpha = 0.0;
    double m_estimate = 0.0;
    /// alpha == 1 (identity, reducible or periodic chain).
    bool degenerate = false;
};

/// Sorted by decreasing modulus; the Perron eigenvalue comes first.
std::vector<Complex> eigenvalues(const MarkovOperator& q);

/// alpha is the modulus of the second largest eigenvalue; M is the sup of
/// ‖Q^n f̃‖ / (alpha^n ‖f‖) over built-in probes, `extra_probes` and n <= 30,
/// ignoring iterates below the round-off floor.
ErgodicityRate ergodicity_rate(const MarkovOperator& q, const Vector& mu,
                               const std::vector<GridFunction>& extra_probes = {});
ErgodicityRate ergodicity_rate(const MarkovOperator& q);

/// The M estimate alone, for a known alpha.
double ergodicity_constant(const MarkovOperator& q, const Vector& mu, double alpha,
                           const std::vector<GridFunction>& extra_probes = {});

struct Projector {
    Complex eigenvalue;
    Complex theta;  // eigenvalue / alpha
    CMatrix matrix;

    CVector apply(const Vector& f) const { return matrix * f.cast<Complex>(); }
    CVector apply(const CVector& f) const { return matrix * f; }
};

struct SpectralData {
    Vector mu;
    double alpha = 0.0;
    double ergodicity_constant = 0.0;
    std::vector<Complex> eigenvalues;
    std::vector<int> J;  // indices into eigenvalues, one per distinct eigenvalue of modulus alpha
    std::vector<Projector> projectors;  // parallel to J
};

/// Spectral data including the projectors R_j on the eigenspaces of modulus
/// alpha. Throws NumericalError if such an eigenvalue is defective.
SpectralData spectral_projectors(const MarkovOperator& q, const std::vector<GridFunction>& extra_probes = {});

/// f̂ = f̃ - alpha^n Σ_j θ_j^n R_j(f), realized.
GridFunction center_hat(const GridFunction& f, const SpectralData& spectral, int n);

/// The pair kernel P(x, dy, dz).
class BranchingKernel {
public:
    /// P = Q ⊗ Q: children conditionally independent with law Q(x, .).
    static BranchingKernel product(MarkovOperator q);
    /// General pair law on a finite space; joint[x](y, z) = P(x, {(y, z)}).
    static BranchingKernel joint(SpacePtr space, std::vector<Matrix> joint, std::string id);

    bool is_product() const { return joint_.empty(); }
    const MarkovOperator& mean_operator() const { return q_; }
    const StateSpace& space() const { return q_.space(); }
    const SpacePtr& space_ptr() const { return q_.space_ptr(); }
    const std::string& id() const { return id_; }

    /// (P0, P1): laws of the first and second child.
    std::pair<MarkovOperator, MarkovOperator> marginals() const;

    /// x -> ∫ g(y, z) P(x, dy, dz) for g given by its node values g(y_i, z_j).
    Vector apply_bivariate(const Matrix& g) const;

    /// x -> ∫ u(y) v(z) P(x, dy, dz).
    Vector apply_pair(const Vector& u, const Vector& v) const;
    CVector apply_pair(const CVector& u, const CVector& v) const;
    /// Same with u ⊗_sym v = (u ⊗ v + v ⊗ u) / 2.
    Vector apply_pair_sym(const Vector& u, const Vector& v) const;
    CVector apply_pair_sym(const CVector& u, const CVector& v) const;

    /// ∫ u(y) v(z) P(x, dy, dz) at one state, given the row of Q at x for
    /// product kernels.
    double pair_at(const Vector& u, const Vector& v, State x, const Vector& q_row) const;

    std::pair<State, State> sample_pair(State x, RandomStream& rng) const;

private:
    explicit BranchingKernel(MarkovOperator q) : q_(std::move(q)), id_(q_.id()) {}

    MarkovOperator q_;
    std::vector<Matrix> joint_;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> joint_cdf_;  // row x: (y, z) flattened
    std::string id_;
};

/// Parameters of the built-in kernels.
struct KernelParams {
    double p = 0.5;        // two_state stay probability
    int grid_nodes = 512;  // beta_mixture, grid_custom
    Quadrature quadrature = Quadrature::Gregory;
    std::string density;  // grid_custom: expression in x, y
};

/// Stay probability of the two-state kernel with alpha = 1/sqrt(2).
double critical_two_state_p();

BranchingKernel beta_mixture_kernel(int grid_nodes = 512, Quadrature rule = Quadrature::Gregory);
BranchingKernel two_state_kernel(double p);
BranchingKernel grid_custom_kernel(const std::string& density, int grid_nodes = 512,
                                   Quadrature rule = Quadrature::Gregory);

/// name ∈ {beta_mixture, two_state, grid_custom}.
BranchingKernel builtin_kernel(const std::string& name, const KernelParams& params);

}  // namespace bmc
