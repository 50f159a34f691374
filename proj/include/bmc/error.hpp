#pragma once

#include <stdexcept>
#include <string>

namespace bmc {

/// Invalid user input: bad parameters, malformed expressions, inadmissible
/// configurations. The CLI maps these to exit code 1.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that could not be carried out: eigensolver failure,
/// non-convergence, defective spectrum, unsupported regime. Exit code 2.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DepthLimitError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class UnsupportedRegimeError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace bmc
