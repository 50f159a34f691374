#include "bmc/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "bmc/error.hpp"

namespace bmc {

double RandomStream::normal() {
    // Box-Muller, one variate per call.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::gamma(double shape) {
    if (!(shape > 0)) throw ConfigError("gamma shape must be positive");
    if (shape < 1.0) {
        double u = 1.0 - uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    // Marsaglia-Tsang
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = 1.0 - uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

double RandomStream::beta(double a, double b) {
    if (!(a > 0) || !(b > 0)) throw ConfigError("beta shapes must be positive");
    double ai = std::round(a), bi = std::round(b);
    if (ai == a && bi == b && a + b - 1 <= 16) {
        // a-th smallest of a+b-1 uniforms.
        std::array<double, 16> u{};
        int m = static_cast<int>(a + b - 1);
        for (int i = 0; i < m; ++i) u[i] = uniform();
        auto k = static_cast<std::size_t>(a) - 1;
        std::nth_element(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(k), u.begin() + m);
        return u[k];
    }
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
}

Beta23Pair draw_beta23_pair(RandomStream& rng) {
    double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
    // Sorting network for four values.
    if (a > b) std::swap(a, b);
    if (c > d) std::swap(c, d);
    if (a > c) std::swap(a, c);
    if (b > d) std::swap(b, d);
    if (b > c) std::swap(b, c);
    return {b, c};
}

}  // namespace bmc
