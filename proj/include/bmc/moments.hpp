#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bmc/kernel.hpp"

namespace bmc {

/// A value of the form x -> row(x)·lin + Σ c·P(u ⊗_sym v)(x) + Σ c·a(x)·b(x),
/// where row(x) is the transition row of Q at x. Every many-to-one oracle
/// reduces to this shape, which makes it cheap to evaluate at many states.
class OracleForm {
public:
    /// Either f(x) for a function, or row(x)·h.
    struct Linear {
        std::optional<GridFunction> fn;
        Vector h;
        double at(State x, const Vector& row) const { return fn ? fn->at(x) : row.dot(h); }
    };

    explicit OracleForm(const BranchingKernel& p);

    void add_row_term(const Vector& v, double coef);
    void add_pair_term(double coef, const Vector& u, const Vector& v);
    void add_point_term(double coef, Linear a, std::optional<Linear> b = std::nullopt);
    OracleForm& operator+=(const OracleForm& o);

    double operator()(State x) const;
    /// Values at every node of the state space.
    Vector on_nodes() const;

private:
    struct Pair {
        double coef;
        Vector u, v;
    };
    struct Point {
        double coef;
        Linear a;
        std::optional<Linear> b;
    };

    const BranchingKernel* p_;
    Vector lin_;
    std::vector<Pair> pairs_;
    std::vector<Point> points_;
};

/// E_x[M_{G_n}(f)] = 2^n Q^n f(x).
OracleForm mean_form(const BranchingKernel& p, const GridFunction& f, int n);
/// E_x[M_{G_n}(f) M_{G_m}(g)], n >= m.
OracleForm cross_form(const BranchingKernel& p, const GridFunction& f, const GridFunction& g, int n, int m);
/// E_x[M_{G_n}(f)^2].
OracleForm second_form(const BranchingKernel& p, const GridFunction& f, int n);

double mean_oracle(const BranchingKernel& p, const GridFunction& f, int n, State x);
double second_moment_oracle(const BranchingKernel& p, const GridFunction& f, int n, State x);
double cross_moment_oracle(const BranchingKernel& p, const GridFunction& f, const GridFunction& g, int n, int m, State x);

struct MomentRequest {
    enum class Kind { Mean, Second, Cross };
    Kind kind = Kind::Mean;
    GridFunction f;
    std::optional<GridFunction> g;  // Cross only
    int n = 0;
    int m = 0;
    /// Start at a state, or integrate the start against a weight vector.
    std::optional<State> x;
    std::optional<Vector> nu;
};

/// Exact expectation by enumerating every state assignment of T_n on a
/// finite space. Throws ConfigError if m^{|T_n|} exceeds `max_assignments`.
double brute_force_moment(const BranchingKernel& p, const MomentRequest& request,
                          std::uint64_t max_assignments = std::uint64_t{1} << 22);

}  // namespace bmc
