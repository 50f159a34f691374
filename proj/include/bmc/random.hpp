#pragma once

#include <cstdint>
#include <random>

namespace bmc {

inline constexpr std::uint64_t kDefaultSeed = 20240607;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Random stream owned by one caller. Uniforms are built from the top 53
/// bits of the engine output, so draws are identical across standard
/// library implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Stream for replica `index` of an ensemble: a pure function of
    /// (master, index), independent of scheduling.
    static RandomStream derive(std::uint64_t master, std::uint64_t index) {
        return RandomStream(splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::uint64_t bits() { return engine_(); }

    double normal();
    double gamma(double shape);
    /// Exact Beta(a, b). Integer shapes with a + b - 1 <= 16 use order
    /// statistics of uniforms; others go through two gamma draws.
    double beta(double a, double b);

private:
    std::mt19937_64 engine_;
};

/// Second order statistic of four uniforms, i.e. Beta(2,3); the third is Beta(3,2).
/// Draws both from the same four uniforms; the caller uses one of them.
struct Beta23Pair {
    double beta23;
    double beta32;
};
Beta23Pair draw_beta23_pair(RandomStream& rng);

}  // namespace bmc
