#pragma once

// Expression mini-language for SubModel bodies.
//
// Grammar:
//   list    := '[' expr (',' expr)* [','] ']'
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | power
//   power   := primary ['^' unary]          (right associative)
//   primary := NUMBER | IDENT '(' expr {',' expr} ')' | IDENT | '(' expr ')'
//
// Functions: exp, log, sqrt, tanh, abs (unary); min, max, pow (binary).
// Differentiation is forward-mode over the node arena; abs/min/max take
// one-sided derivatives at kinks with abs'(0) = 0.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gradnet/errors.hpp"

namespace gradnet::submodel {

enum class ExprOp {
    Const,
    Var,
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Min,
    Max,
};

struct ExprNode {
    ExprOp op = ExprOp::Const;
    double value = 0.0;    // Const
    int var_slot = -1;     // Var, after binding
    std::string name;      // Var
    int a = -1;
    int b = -1;

    static ExprNode constant(double v) {
        ExprNode n;
        n.value = v;
        return n;
    }
    static ExprNode variable(std::string name) {
        ExprNode n;
        n.op = ExprOp::Var;
        n.name = std::move(name);
        return n;
    }
    static ExprNode unary(ExprOp op, int a) {
        ExprNode n;
        n.op = op;
        n.a = a;
        return n;
    }
    static ExprNode binary(ExprOp op, int a, int b) {
        ExprNode n;
        n.op = op;
        n.a = a;
        n.b = b;
        return n;
    }
};

struct ExprProgram {
    std::vector<ExprNode> nodes;
    std::vector<int> roots;  // one per list entry

    std::size_t n_outputs() const { return roots.size(); }

    /// Resolve every Var against `names`; unknown names raise UnboundVariable.
    void bind(std::span<const std::string> names) {
        for (ExprNode& n : nodes) {
            if (n.op != ExprOp::Var) continue;
            n.var_slot = -1;
            for (std::size_t i = 0; i < names.size(); ++i) {
                if (names[i] == n.name) {
                    n.var_slot = static_cast<int>(i);
                    break;
                }
            }
            if (n.var_slot < 0) {
                throw UnboundVariable("symbol '" + n.name + "' is not in scope");
            }
        }
    }

    std::vector<std::string> free_variables() const {
        std::vector<std::string> out;
        for (const ExprNode& n : nodes) {
            if (n.op == ExprOp::Var &&
                std::find(out.begin(), out.end(), n.name) == out.end()) {
                out.push_back(n.name);
            }
        }
        return out;
    }
};

namespace exprdetail {

class ExprParser {
  public:
    explicit ExprParser(const std::string& text) : text_(text) {}

    ExprProgram parse_list() {
        ExprProgram prog;
        skip_ws();
        if (!eat('[')) fail("expected '[' to open the intrinsic list");
        skip_ws();
        if (eat(']')) {
            finish();
            return prog;
        }
        while (true) {
            prog.roots.push_back(parse_expr(prog));
            skip_ws();
            if (eat(',')) {
                skip_ws();
                if (eat(']')) break;  // trailing comma
                continue;
            }
            if (eat(']')) break;
            fail("expected ',' or ']' in intrinsic list");
        }
        finish();
        return prog;
    }

  private:
    const std::string& text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) {
        throw ExprParseError(msg + " (offset " + std::to_string(pos_) + " in \"" + text_ + "\")");
    }

    void finish() {
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters after expression list");
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

    bool eat(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    int push(ExprProgram& p, ExprNode n) {
        p.nodes.push_back(std::move(n));
        return static_cast<int>(p.nodes.size() - 1);
    }

    int parse_expr(ExprProgram& p) {
        int lhs = parse_term(p);
        while (true) {
            skip_ws();
            if (eat('+')) {
                int rhs = parse_term(p);
                lhs = push(p, ExprNode::binary(ExprOp::Add, lhs, rhs));
            } else if (eat('-')) {
                int rhs = parse_term(p);
                lhs = push(p, ExprNode::binary(ExprOp::Sub, lhs, rhs));
            } else {
                return lhs;
            }
        }
    }

    int parse_term(ExprProgram& p) {
        int lhs = parse_unary(p);
        while (true) {
            skip_ws();
            if (eat('*')) {
                int rhs = parse_unary(p);
                lhs = push(p, ExprNode::binary(ExprOp::Mul, lhs, rhs));
            } else if (eat('/')) {
                int rhs = parse_unary(p);
                lhs = push(p, ExprNode::binary(ExprOp::Div, lhs, rhs));
            } else {
                return lhs;
            }
        }
    }

    int parse_unary(ExprProgram& p) {
        skip_ws();
        if (eat('-')) {
            int inner = parse_unary(p);
            return push(p, ExprNode::unary(ExprOp::Neg, inner));
        }
        return parse_power(p);
    }

    int parse_power(ExprProgram& p) {
        int base = parse_primary(p);
        skip_ws();
        if (eat('^')) {
            int expo = parse_unary(p);
            return push(p, ExprNode::binary(ExprOp::Pow, base, expo));
        }
        return base;
    }

    int parse_primary(ExprProgram& p) {
        skip_ws();
        char c = peek();
        if (c == '(') {
            ++pos_;
            int inner = parse_expr(p);
            skip_ws();
            if (!eat(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return parse_number(p);
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string ident = parse_ident();
            skip_ws();
            if (peek() == '(') {
                ++pos_;
                std::vector<int> args;
                skip_ws();
                if (!eat(')')) {
                    while (true) {
                        args.push_back(parse_expr(p));
                        skip_ws();
                        if (eat(',')) continue;
                        if (eat(')')) break;
                        fail("expected ',' or ')' in call");
                    }
                }
                return make_call(p, ident, args);
            }
            return push(p, ExprNode::variable(ident));
        }
        fail("unexpected character in expression");
    }

    int make_call(ExprProgram& p, const std::string& fn, const std::vector<int>& args) {
        auto unary = [&](ExprOp op) {
            if (args.size() != 1) fail(fn + " takes one argument");
            return push(p, ExprNode::unary(op, args[0]));
        };
        auto binary = [&](ExprOp op) {
            if (args.size() != 2) fail(fn + " takes two arguments");
            return push(p, ExprNode::binary(op, args[0], args[1]));
        };
        if (fn == "exp") return unary(ExprOp::Exp);
        if (fn == "log") return unary(ExprOp::Log);
        if (fn == "sqrt") return unary(ExprOp::Sqrt);
        if (fn == "tanh") return unary(ExprOp::Tanh);
        if (fn == "abs") return unary(ExprOp::Abs);
        if (fn == "min") return binary(ExprOp::Min);
        if (fn == "max") return binary(ExprOp::Max);
        if (fn == "pow") return binary(ExprOp::Pow);
        fail("unknown function '" + fn + "'");
    }

    std::string parse_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
                ++pos_;
            } else {
                break;
            }
        }
        return text_.substr(start, pos_ - start);
    }

    int parse_number(ExprProgram& p) {
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (peek() == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (peek() == 'e' || peek() == 'E') {
            ++pos_;
            if (peek() == '+' || peek() == '-') ++pos_;
            if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("malformed exponent");
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        std::string slice = text_.substr(start, pos_ - start);
        char* end = nullptr;
        double v = std::strtod(slice.c_str(), &end);
        if (end != slice.c_str() + slice.size()) fail("malformed number");
        return push(p, ExprNode::constant(v));
    }
};

}  // namespace exprdetail

inline ExprProgram parse_expression_list(const std::string& text) {
    return exprdetail::ExprParser(text).parse_list();
}

/// Values plus dense forward-mode partials with respect to `inputs`.
struct ExprEvalResult {
    std::vector<double> values;               // n_outputs
    std::vector<std::vector<double>> jacobian;  // n_outputs x n_inputs
};

inline ExprEvalResult evaluate_with_gradients(const ExprProgram& prog,
                                              std::span<const double> inputs) {
    const std::size_t m = inputs.size();
    std::vector<double> val(prog.nodes.size(), 0.0);
    std::vector<std::vector<double>> grad(prog.nodes.size(), std::vector<double>(m, 0.0));

    for (std::size_t i = 0; i < prog.nodes.size(); ++i) {
        const ExprNode& n = prog.nodes[i];
        auto& g = grad[i];
        const std::size_t ia = static_cast<std::size_t>(n.a);
        const std::size_t ib = static_cast<std::size_t>(n.b);
        switch (n.op) {
            case ExprOp::Const:
                val[i] = n.value;
                break;
            case ExprOp::Var:
                val[i] = inputs[static_cast<std::size_t>(n.var_slot)];
                g[static_cast<std::size_t>(n.var_slot)] = 1.0;
                break;
            case ExprOp::Neg:
                val[i] = -val[ia];
                for (std::size_t k = 0; k < m; ++k) g[k] = -grad[ia][k];
                break;
            case ExprOp::Add:
                val[i] = val[ia] + val[ib];
                for (std::size_t k = 0; k < m; ++k) g[k] = grad[ia][k] + grad[ib][k];
                break;
            case ExprOp::Sub:
                val[i] = val[ia] - val[ib];
                for (std::size_t k = 0; k < m; ++k) g[k] = grad[ia][k] - grad[ib][k];
                break;
            case ExprOp::Mul:
                val[i] = val[ia] * val[ib];
                for (std::size_t k = 0; k < m; ++k) {
                    g[k] = grad[ia][k] * val[ib] + val[ia] * grad[ib][k];
                }
                break;
            case ExprOp::Div: {
                val[i] = val[ia] / val[ib];
                double inv = 1.0 / val[ib];
                for (std::size_t k = 0; k < m; ++k) {
                    g[k] = (grad[ia][k] - val[i] * grad[ib][k]) * inv;
                }
                break;
            }
            case ExprOp::Pow: {
                double a = val[ia], b = val[ib];
                double v = std::pow(a, b);
                val[i] = v;
                double da = b * std::pow(a, b - 1.0);
                double db = a > 0.0 ? v * std::log(a) : 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    double gb = grad[ib][k];
                    g[k] = da * grad[ia][k] + (gb != 0.0 ? db * gb : 0.0);
                }
                break;
            }
            case ExprOp::Exp:
                val[i] = std::exp(val[ia]);
                for (std::size_t k = 0; k < m; ++k) g[k] = val[i] * grad[ia][k];
                break;
            case ExprOp::Log:
                val[i] = std::log(val[ia]);
                for (std::size_t k = 0; k < m; ++k) g[k] = grad[ia][k] / val[ia];
                break;
            case ExprOp::Sqrt: {
                val[i] = std::sqrt(val[ia]);
                double d = val[i] > 0.0 ? 0.5 / val[i] : std::numeric_limits<double>::infinity();
                for (std::size_t k = 0; k < m; ++k) {
                    g[k] = grad[ia][k] == 0.0 ? 0.0 : d * grad[ia][k];
                }
                break;
            }
            case ExprOp::Tanh: {
                val[i] = std::tanh(val[ia]);
                double d = 1.0 - val[i] * val[i];
                for (std::size_t k = 0; k < m; ++k) g[k] = d * grad[ia][k];
                break;
            }
            case ExprOp::Abs: {
                val[i] = std::abs(val[ia]);
                double sgn = val[ia] > 0.0 ? 1.0 : (val[ia] < 0.0 ? -1.0 : 0.0);
                for (std::size_t k = 0; k < m; ++k) g[k] = sgn * grad[ia][k];
                break;
            }
            case ExprOp::Min:
            case ExprOp::Max: {
                bool pick_a = n.op == ExprOp::Min ? val[ia] <= val[ib] : val[ia] >= val[ib];
                std::size_t sel = pick_a ? ia : ib;
                val[i] = val[sel];
                g = grad[sel];
                break;
            }
        }
    }

    ExprEvalResult out;
    out.values.reserve(prog.roots.size());
    out.jacobian.reserve(prog.roots.size());
    for (int root : prog.roots) {
        double v = val[static_cast<std::size_t>(root)];
        if (!std::isfinite(v)) {
            throw EvalDomainError("expression produced a non-finite value");
        }
        for (double d : grad[static_cast<std::size_t>(root)]) {
            if (!std::isfinite(d)) {
                throw EvalDomainError("expression produced a non-finite derivative");
            }
        }
        out.values.push_back(v);
        out.jacobian.push_back(grad[static_cast<std::size_t>(root)]);
    }
    return out;
}

}  // namespace gradnet::submodel
