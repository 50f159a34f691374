#include "bmc/expr.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <optional>

namespace bmc::expr {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : ConfigError(what + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

NodePtr make(Kind kind, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->lhs = std::move(lhs);
    n->rhs = std::move(rhs);
    return n;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }

// Value of a subtree built only from literals and operators, if any.
std::optional<double> constant_value(const Node& n) {
    switch (n.kind) {
        case Kind::Literal: return n.value;
        case Kind::Variable: return std::nullopt;
        case Kind::Group: return constant_value(*n.lhs);
        case Kind::Negate: {
            auto v = constant_value(*n.lhs);
            return v ? std::optional(-*v) : std::nullopt;
        }
        default: break;
    }
    auto a = constant_value(*n.lhs);
    auto b = constant_value(*n.rhs);
    if (!a || !b) return std::nullopt;
    switch (n.kind) {
        case Kind::Add: return *a + *b;
        case Kind::Sub: return *a - *b;
        case Kind::Mul: return *a * *b;
        case Kind::Div: return *b == 0.0 ? std::nullopt : std::optional(*a / *b);
        case Kind::Pow: return std::pow(*a, *b);
        default: return std::nullopt;
    }
}

class Parser {
public:
    Parser(std::string_view text, bool allow_y) : s_(text), allow_y_(allow_y) {}

    NodePtr run() {
        auto e = expression();
        skip();
        if (pos_ != s_.size()) throw ParseError("unexpected character '" + std::string(1, s_[pos_]) + "'", pos_);
        return e;
    }

private:
    void skip() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r'))
            ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expression() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(Kind::Add, lhs, term());
            else if (accept('-')) lhs = make(Kind::Sub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make(Kind::Mul, lhs, unary());
            else if (accept('/')) lhs = make(Kind::Div, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Kind::Negate, unary());
        return power();
    }

    NodePtr power() {
        auto base = primary();
        if (!accept('^')) return base;
        skip();
        std::size_t exp_at = pos_;
        auto exponent = power();
        auto v = constant_value(*exponent);
        if (!v || *v != std::floor(*v) || std::abs(*v) > 1024)
            throw ParseError("exponent must be an integer constant", exp_at);
        return make(Kind::Pow, base, exponent);
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expression();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return make(Kind::Group, inner);
        }
        if (is_digit(c) || c == '.') return number();
        if (is_alpha(c)) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (is_alpha(s_[pos_]) || is_digit(s_[pos_]))) ++pos_;
            std::string_view name = s_.substr(start, pos_ - start);
            auto n = std::make_shared<Node>();
            n->kind = Kind::Variable;
            if (name == "x") n->variable = 0;
            else if (name == "y" && allow_y_) n->variable = 1;
            else throw ParseError("unknown identifier '" + std::string(name) + "'", start);
            return n;
        }
        throw ParseError("unexpected character '" + std::string(1, c) + "'", pos_);
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (pos_ < s_.size() && is_digit(s_[pos_])) {
                while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string_view tok = s_.substr(start, pos_ - start);
        if (tok == ".") throw ParseError("malformed number", start);
        double v = 0.0;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) throw ParseError("malformed number", start);
        auto n = std::make_shared<Node>();
        n->kind = Kind::Literal;
        n->value = v;
        return n;
    }

    std::string_view s_;
    bool allow_y_;
    std::size_t pos_ = 0;
};

const char* op_text(Kind k) {
    switch (k) {
        case Kind::Add: return " + ";
        case Kind::Sub: return " - ";
        case Kind::Mul: return " * ";
        case Kind::Div: return " / ";
        case Kind::Pow: return "^";
        default: return "";
    }
}

}  // namespace

bool equal(const Node& a, const Node& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case Kind::Literal: return a.value == b.value;
        case Kind::Variable: return a.variable == b.variable;
        case Kind::Negate:
        case Kind::Group: return equal(*a.lhs, *b.lhs);
        default: return equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
    }
}

NodePtr parse(std::string_view text, bool allow_y) { return Parser(text, allow_y).run(); }

std::string print(const Node& n) {
    switch (n.kind) {
        case Kind::Literal: {
            std::array<char, 64> buf{};
            auto res = std::to_chars(buf.data(), buf.data() + buf.size(), n.value);
            return std::string(buf.data(), res.ptr);
        }
        case Kind::Variable: return n.variable == 0 ? "x" : "y";
        case Kind::Negate: return "-" + print(*n.lhs);
        case Kind::Group: return "(" + print(*n.lhs) + ")";
        default: return print(*n.lhs) + op_text(n.kind) + print(*n.rhs);
    }
}

Compiled::Compiled(const Node& root) {
    std::size_t depth = 0;
    auto emit = [&](auto&& self, const Node& n) -> void {
        switch (n.kind) {
            case Kind::Group: self(self, *n.lhs); return;
            case Kind::Literal:
            case Kind::Variable:
                program_.push_back({n.kind, n.value, n.variable});
                if (n.kind == Kind::Variable && n.variable == 1) uses_y_ = true;
                max_stack_ = std::max(max_stack_, ++depth);
                return;
            case Kind::Negate:
                self(self, *n.lhs);
                program_.push_back({Kind::Negate, 0.0, 0});
                return;
            case Kind::Pow:
                self(self, *n.lhs);
                program_.push_back({Kind::Pow, *constant_value(*n.rhs), 0});
                return;
            default:
                self(self, *n.lhs);
                self(self, *n.rhs);
                program_.push_back({n.kind, 0.0, 0});
                --depth;
                return;
        }
    };
    emit(emit, root);
}

double Compiled::operator()(double x, double y) const {
    constexpr std::size_t kInline = 32;
    std::array<double, kInline> small{};
    std::vector<double> big;
    double* st = small.data();
    if (max_stack_ > kInline) {
        big.resize(max_stack_);
        st = big.data();
    }
    std::size_t top = 0;
    for (const Op& op : program_) {
        switch (op.kind) {
            case Kind::Literal: st[top++] = op.value; break;
            case Kind::Variable: st[top++] = op.variable == 0 ? x : y; break;
            case Kind::Negate: st[top - 1] = -st[top - 1]; break;
            case Kind::Pow: {
                int e = static_cast<int>(op.value);
                double b = st[top - 1];
                if (e < 0 && b == 0.0) throw NumericalError("division by zero in expression");
                double r = 1.0;
                for (int i = 0, m = std::abs(e); i < m; ++i) r *= b;
                st[top - 1] = e < 0 ? 1.0 / r : r;
                break;
            }
            default: {
                double b = st[--top];
                double& a = st[top - 1];
                switch (op.kind) {
                    case Kind::Add: a += b; break;
                    case Kind::Sub: a -= b; break;
                    case Kind::Mul: a *= b; break;
                    case Kind::Div:
                        if (b == 0.0) throw NumericalError("division by zero in expression");
                        a /= b;
                        break;
                    default: break;
                }
            }
        }
    }
    return st[0];
}

}  // namespace bmc::expr
