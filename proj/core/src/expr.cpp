#include "parakern/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace parakern {

namespace {

enum Fn1 { kSin, kCos, kTan, kExp, kLog, kSqrt, kAbs, kSign, kStep, kTanh };
enum Fn2 { kMin, kMax, kPow };

int fn1_id(const std::string& name) {
    if (name == "sin") return kSin;
    if (name == "cos") return kCos;
    if (name == "tan") return kTan;
    if (name == "exp") return kExp;
    if (name == "log") return kLog;
    if (name == "sqrt") return kSqrt;
    if (name == "abs") return kAbs;
    if (name == "sign") return kSign;
    if (name == "step") return kStep;
    if (name == "tanh") return kTanh;
    return -1;
}

int fn2_id(const std::string& name) {
    if (name == "min") return kMin;
    if (name == "max") return kMax;
    if (name == "pow") return kPow;
    return -1;
}

} // namespace

class ExprParser {
public:
    ExprParser(const std::string& text, int dim, Expression& out)
        : s_(text), dim_(dim), out_(out) {}

    void run() {
        out_.root_ = parse_expr();
        skip_ws();
        if (pos_ != s_.size())
            throw ValidationError("expression: unexpected input at position " +
                                  std::to_string(pos_) + " in '" + s_ + "'");
    }

private:
    using Node = Expression::Node;
    using Kind = Expression::Node::Kind;

    const std::string& s_;
    std::size_t pos_ = 0;
    int dim_;
    Expression& out_;

    int add(Node n) {
        out_.nodes_.push_back(n);
        return static_cast<int>(out_.nodes_.size()) - 1;
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    int parse_expr() {
        int lhs = parse_term();
        for (;;) {
            if (eat('+')) {
                int rhs = parse_term();
                lhs = add({Kind::Add, 0, 0, lhs, rhs, 0});
            } else if (eat('-')) {
                int rhs = parse_term();
                lhs = add({Kind::Sub, 0, 0, lhs, rhs, 0});
            } else {
                return lhs;
            }
        }
    }

    int parse_term() {
        int lhs = parse_factor();
        for (;;) {
            if (eat('*')) {
                int rhs = parse_factor();
                lhs = add({Kind::Mul, 0, 0, lhs, rhs, 0});
            } else if (eat('/')) {
                int rhs = parse_factor();
                lhs = add({Kind::Div, 0, 0, lhs, rhs, 0});
            } else {
                return lhs;
            }
        }
    }

    // right-associative power
    int parse_factor() {
        int base = parse_unary();
        if (eat('^')) {
            int expo = parse_factor();
            return add({Kind::Pow, 0, 0, base, expo, 0});
        }
        return base;
    }

    int parse_unary() {
        if (eat('-')) return add({Kind::Neg, 0, 0, parse_unary(), -1, 0});
        if (eat('+')) return parse_unary();
        return parse_primary();
    }

    int parse_primary() {
        skip_ws();
        if (pos_ >= s_.size()) throw ValidationError("expression: unexpected end of '" + s_ + "'");
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            int e = parse_expr();
            if (!eat(')')) throw ValidationError("expression: missing ')' in '" + s_ + "'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw ValidationError(std::string("expression: unexpected character '") + c + "' in '" + s_ + "'");
    }

    int parse_number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) throw ValidationError("expression: bad number in '" + s_ + "'");
        pos_ += static_cast<std::size_t>(end - begin);
        return add({Kind::Constant, v, 0, -1, -1, 0});
    }

    int parse_ident() {
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string name = s_.substr(start, pos_ - start);

        if (peek() == '(') {
            ++pos_;
            std::vector<int> args;
            if (peek() != ')') {
                args.push_back(parse_expr());
                while (eat(',')) args.push_back(parse_expr());
            }
            if (!eat(')')) throw ValidationError("expression: missing ')' after " + name);
            if (int id = fn1_id(name); id >= 0) {
                if (args.size() != 1)
                    throw ValidationError("expression: " + name + " takes 1 argument");
                if (id == kAbs || id == kSign || id == kStep) out_.smooth_ = false;
                return add({Kind::Call1, 0, 0, args[0], -1, id});
            }
            if (int id = fn2_id(name); id >= 0) {
                if (args.size() != 2)
                    throw ValidationError("expression: " + name + " takes 2 arguments");
                if (id == kMin || id == kMax) out_.smooth_ = false;
                return add({Kind::Call2, 0, 0, args[0], args[1], id});
            }
            throw ValidationError("expression: unknown function '" + name + "'");
        }

        if (name == "t") return add({Kind::VarT, 0, 0, -1, -1, 0});
        if (name == "pi") return add({Kind::Constant, 3.14159265358979323846, 0, -1, -1, 0});
        if (name == "x") {
            return add({Kind::VarX, 0, 0, -1, -1, 0});
        }
        if (name.size() >= 2 && name[0] == 'x') {
            bool digits = std::all_of(name.begin() + 1, name.end(), [](char ch) {
                return std::isdigit(static_cast<unsigned char>(ch));
            });
            if (digits) {
                const int k = std::atoi(name.c_str() + 1);
                if (k < 0 || k >= dim_)
                    throw ValidationError("expression: variable " + name + " out of range for d=" +
                                          std::to_string(dim_));
                return add({Kind::VarX, 0, k, -1, -1, 0});
            }
        }
        throw ValidationError("expression: unknown identifier '" + name + "'");
    }
};

Expression Expression::parse(const std::string& text, int dimension) {
    if (dimension < 1 || dimension > 10)
        throw ValidationError("expression: dimension must be in [1,10]");
    Expression e;
    e.text_ = text;
    ExprParser parser(text, dimension, e);
    parser.run();
    return e;
}

double Expression::eval_node(int idx, double t, const double* x) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    switch (n.kind) {
        case Node::Kind::Constant: return n.value;
        case Node::Kind::VarT: return t;
        case Node::Kind::VarX: return x[n.var];
        case Node::Kind::Add: return eval_node(n.a, t, x) + eval_node(n.b, t, x);
        case Node::Kind::Sub: return eval_node(n.a, t, x) - eval_node(n.b, t, x);
        case Node::Kind::Mul: return eval_node(n.a, t, x) * eval_node(n.b, t, x);
        case Node::Kind::Div: return eval_node(n.a, t, x) / eval_node(n.b, t, x);
        case Node::Kind::Pow: return std::pow(eval_node(n.a, t, x), eval_node(n.b, t, x));
        case Node::Kind::Neg: return -eval_node(n.a, t, x);
        case Node::Kind::Call1: {
            const double v = eval_node(n.a, t, x);
            switch (n.fn) {
                case kSin: return std::sin(v);
                case kCos: return std::cos(v);
                case kTan: return std::tan(v);
                case kExp: return std::exp(v);
                case kLog: return std::log(v);
                case kSqrt: return std::sqrt(v);
                case kAbs: return std::abs(v);
                case kSign: return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                case kStep: return v > 0.0 ? 1.0 : 0.0;
                case kTanh: return std::tanh(v);
            }
            return 0.0;
        }
        case Node::Kind::Call2: {
            const double a = eval_node(n.a, t, x);
            const double b = eval_node(n.b, t, x);
            switch (n.fn) {
                case kMin: return std::min(a, b);
                case kMax: return std::max(a, b);
                case kPow: return std::pow(a, b);
            }
            return 0.0;
        }
    }
    return 0.0;
}

double Expression::eval(double t, const Vector& x) const {
    return eval_node(root_, t, x.data());
}

double Expression::eval1(double t, double x) const {
    return eval_node(root_, t, &x);
}

} // namespace parakern
