#ifndef PARAKERN_COEFFICIENTS_HPP
#define PARAKERN_COEFFICIENTS_HPP

#include "parakern/expr.hpp"
#include "parakern/rng.hpp"
#include "parakern/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace parakern {

// uniform ellipticity constant: eigenvalues of a(t,x) lie in [1/lambda, lambda]
struct EllipticityBounds {
    double lambda = 1.0;
};

// symmetric square root of an SPD matrix together with its inverse,
// from one eigendecomposition
struct SigmaEval {
    Matrix sigma;
    Matrix sigma_inv;
    double min_eig = 0.0;  // extremes of the input matrix a
    double max_eig = 0.0;
};

Matrix sqrt_spd(const Matrix& a);
SigmaEval sigma_eval(const Matrix& a);

// Evaluable coefficient triple (a, b, c) with declared dimension, ellipticity
// constant and sup-norms.  Immutable after construction and safe to share
// across threads; every evaluation is a pure function of (t, x).
class CoefficientField {
public:
    using MatrixFn = std::function<Matrix(double, const Vector&)>;
    using VectorFn = std::function<Vector(double, const Vector&)>;
    using ScalarFn = std::function<double(double, const Vector&)>;
    using Scalar1Fn = std::function<double(double, double)>;

    CoefficientField(int d, EllipticityBounds bounds, MatrixFn a, VectorFn b, ScalarFn c,
                     double b_sup, double c_sup, bool a_spatially_smooth);

    int dim() const { return d_; }
    const EllipticityBounds& bounds() const { return bounds_; }
    double lambda() const { return bounds_.lambda; }
    double b_sup() const { return b_sup_; }
    double c_sup() const { return c_sup_; }
    bool has_drift() const { return b_sup_ > 0.0; }
    bool has_potential() const { return c_sup_ != 0.0; }
    bool a_spatially_smooth() const { return a_smooth_; }

    Matrix a(double t, const Vector& x) const { return a_(t, x); }
    Vector b(double t, const Vector& x) const { return b_(t, x); }
    double c(double t, const Vector& x) const { return c_(t, x); }

    // scalar fast path, available when d == 1
    bool has_scalar_forms() const { return static_cast<bool>(a1_); }
    double a1(double t, double x) const { return a1_(t, x); }
    double b1(double t, double x) const { return b1_(t, x); }
    double c1(double t, double x) const { return c1_(t, x); }
    void set_scalar_forms(Scalar1Fn a1, Scalar1Fn b1, Scalar1Fn c1);

    // constant-coefficient fields expose their data for analytic kernels
    bool is_constant() const { return constant_a_.has_value(); }
    const Matrix& const_a() const;
    const Vector& const_b() const;
    double const_c() const;
    void set_constant_data(Matrix a0, Vector b0, double c0);

    const std::string& name() const { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }

private:
    int d_;
    EllipticityBounds bounds_;
    MatrixFn a_;
    VectorFn b_;
    ScalarFn c_;
    double b_sup_;
    double c_sup_;
    bool a_smooth_;
    Scalar1Fn a1_, b1_, c1_;
    std::optional<Matrix> constant_a_;
    Vector constant_b_;
    double constant_c_ = 0.0;
    std::string name_ = "custom";
};

// sigma(t,x)^{-1} b(t,x); norm bounded by sqrt(lambda) * b_sup
Vector b_sigma(const CoefficientField& field, double t, const Vector& x);

// ---- assumption validators -------------------------------------------------

// space-time sampling box: nt time slices on [t0,t1], nx points per axis
// on [-half_width, half_width]^d
struct GridSpec {
    double t0 = 0.0;
    double t1 = 1.0;
    int nt = 5;
    double half_width = 5.0;
    int nx = 101;
};

struct EllipticityReport {
    double min_eig = 0.0;
    double max_eig = 0.0;
    bool symmetric = true;
    bool pass = false;
    GridSpec grid;
};

EllipticityReport check_ellipticity(const CoefficientField& field, const GridSpec& grid);

// empirical modulus of continuity of a on B(0;R)
struct ContinuityReport {
    double radius = 0.0;
    std::vector<std::pair<double, double>> pairs;    // (distance, sup difference), sorted
    std::vector<std::pair<double, double>> envelope; // nondecreasing running max
};

ContinuityReport estimate_modulus(const CoefficientField& field, double radius,
                                  int n_pairs, int t_samples, double t_max, RngStream& rng);

// evaluate a nondecreasing envelope at distance r (0 below the first node)
double envelope_value(const ContinuityReport& report, double r);

// quadrature check of the weak-derivative integrability assumption
struct A3Spec {
    double theta = 3.0;
    double decay_m = 1.0;
    double half_width = 30.0;
    int nodes_per_axis = 2001;
    double fd_step = 1e-4;
    int t_samples = 3;
    double t_max = 1.0;
};

struct A3Report {
    bool applicable = true;  // false for fields whose a has kinks or jumps
    double value = 0.0;
    bool finite = true;
};

A3Report estimate_a3_integral(const CoefficientField& field, const A3Spec& spec);

// ---- preset catalog ---------------------------------------------------------

CoefficientField make_constant_field(const Matrix& a0, const Vector& b0, double c0);
CoefficientField make_sin_a_field(int d = 1);
CoefficientField make_disc_bc_field(int d = 1);

struct ExpressionFieldSpec {
    int d = 1;
    double lambda = 1.0;
    std::vector<std::vector<std::string>> a;  // d x d, symmetric
    std::vector<std::string> b;               // d entries
    std::string c = "0";
    double b_sup = 0.0;
    double c_sup = 0.0;
};

CoefficientField make_expression_field(const ExpressionFieldSpec& spec);

// time-shifted view: coefficients evaluated at (t + shift, x)
CoefficientField shift_time(const CoefficientField& field, double shift);

} // namespace parakern

#endif
