#ifndef PARAKERN_EXPR_HPP
#define PARAKERN_EXPR_HPP

#include "parakern/types.hpp"

#include <string>
#include <vector>

namespace parakern {

// Parsed arithmetic expression in the variables t, x0..x9 ("x" aliases x0).
// Supports + - * / ^, parentheses, and the functions
//   sin cos tan exp log sqrt abs sign step tanh min max pow
// where step(u) = 1 for u > 0 and 0 otherwise.
class Expression {
public:
    static Expression parse(const std::string& text, int dimension);

    double eval(double t, const Vector& x) const;
    double eval1(double t, double x) const;  // d == 1 fast path

    // false if the expression contains abs/sign/step (kinks or jumps)
    bool spatially_smooth() const { return smooth_; }
    const std::string& text() const { return text_; }

    struct Node {
        enum class Kind { Constant, VarT, VarX, Add, Sub, Mul, Div, Pow, Neg, Call1, Call2 };
        Kind kind = Kind::Constant;
        double value = 0.0;  // Constant
        int var = 0;         // VarX component
        int a = -1, b = -1;  // children
        int fn = 0;          // Call1/Call2 function id
    };

private:
    Expression() = default;

    double eval_node(int idx, double t, const double* x) const;

    std::vector<Node> nodes_;
    int root_ = -1;
    bool smooth_ = true;
    std::string text_;

    friend class ExprParser;
};

} // namespace parakern

#endif
