#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bmc/kernel.hpp"
#include "bmc/simulate.hpp"

namespace bmc::cli {

/// Flat experiment record. Every field maps to a flag and a config-file key
/// of the same name.
struct ExperimentConfig {
    std::string kernel = "beta_mixture";
    double p = 0.5;
    int grid = 512;
    std::string quadrature = "gregory";
    std::string density;

    std::string f = "x";
    std::string mode = "single";
    std::string fs;  // explicit mode: terms separated by ';'

    int n = 12;
    int replicas = 1000;
    std::uint64_t seed = kDefaultSeed;
    std::string init = "stationary";
    int threads = 0;

    double tol = 1e-12;
    double beta = 0.4;
    std::string speed = "auto";  // auto | sub | crit
    std::string deltas;          // comma-separated; empty for the default grid
    std::string probe = "none";  // none | wrong-speed

    double x = 0.3;  // verify-moments start state
    int cut = 0;     // decompose: 0 picks the default p

    std::string out;
    std::string meta;
};

KernelParams kernel_params(const ExperimentConfig& cfg);
BranchingKernel make_kernel(const ExperimentConfig& cfg);

/// "indicator:K" on finite spaces, otherwise an expression in x.
GridFunction make_function(const std::string& spec, const SpacePtr& space);

/// Builds 𝔣 from mode ∈ {single, all, explicit}.
FunctionSeq make_sequence(const ExperimentConfig& cfg, const SpacePtr& space, const Vector& mu);

std::vector<double> parse_list(const std::string& text);

/// Doubles with 17 significant digits.
std::string fmt(double v);

/// Runs one subcommand; returns the process exit code (0 ok, 1 config
/// error, 2 numerical failure).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bmc::cli
