#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "bmc/error.hpp"

namespace bmc::expr {

class ParseError : public ConfigError {
public:
    ParseError(const std::string& what, std::size_t offset);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

enum class Kind { Literal, Variable, Negate, Add, Sub, Mul, Div, Pow, Group };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

/// Expression tree. Grouping parentheses are kept as Group nodes so that
/// printing reproduces the parsed structure exactly.
struct Node {
    Kind kind;
    double value = 0.0;  // Literal
    int variable = 0;    // Variable: 0 for x, 1 for y
    NodePtr lhs;         // unary operand, or left operand
    NodePtr rhs;
};

bool equal(const Node& a, const Node& b);

/// Parses arithmetic over the given variables ("x", optionally "y").
/// Precedence: ^ (right assoc, integer constant exponent) > unary - > * / > + -.
NodePtr parse(std::string_view text, bool allow_y = false);

std::string print(const Node& node);

/// Evaluated as a flat stack program; division by zero raises NumericalError.
class Compiled {
public:
    Compiled() = default;
    explicit Compiled(const Node& root);

    double operator()(double x, double y = 0.0) const;
    bool uses_y() const { return uses_y_; }

private:
    struct Op {
        Kind kind;
        double value;
        int variable;
    };
    std::vector<Op> program_;
    std::size_t max_stack_ = 0;
    bool uses_y_ = false;
};

}  // namespace bmc::expr
