#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "bmc/cli.hpp"
#include "bmc/kernel.hpp"
#include "bmc/variance.hpp"

namespace py = pybind11;

namespace {

std::tuple<int, std::string, std::string> run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = bmc::cli::run(args, out, err);
    }
    return {code, out.str(), err.str()};
}

}  // namespace

PYBIND11_MODULE(_bmc, m) {
    m.doc() = "Bifurcating Markov chain simulation and variance tools";
    m.def("run", &run, py::arg("args"),
          "Run one bmc subcommand; returns (exit code, stdout, stderr).");
    m.def(
        "rate", [](double sigma, double delta) { return bmc::rate(bmc::RateFunction{sigma}, delta); },
        py::arg("sigma"), py::arg("delta"), "Quadratic rate delta^2 / (2 sigma).");
    m.def("critical_two_state_p", &bmc::critical_two_state_p);
}
