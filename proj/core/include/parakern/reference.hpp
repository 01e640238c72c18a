#ifndef PARAKERN_REFERENCE_HPP
#define PARAKERN_REFERENCE_HPP

#include "parakern/coefficients.hpp"
#include "parakern/types.hpp"

#include <functional>
#include <vector>

namespace parakern {

// closed-form fundamental solution data for constant coefficients:
// p(0,x;t,y) = N(y; x + b0 t, a0 t) * exp(c0 t)
struct ConstantCoefficientKernel {
    Matrix a0;
    Vector b0;
    double c0 = 0.0;

    int dim() const { return static_cast<int>(a0.rows()); }
    static ConstantCoefficientKernel from_field(const CoefficientField& field);
};

double gaussian_kernel(const ConstantCoefficientKernel& k, double t, const Vector& x,
                       const Vector& y);

// d == 1 convenience overload
double gaussian_kernel_1d(const ConstantCoefficientKernel& k, double t, double x, double y);

// Chapman-Kolmogorov defect |p(0,x;t,y) - int p(0,x;s,xi) p(s,xi;t,y) dxi|
// under Simpson quadrature (d == 1)
double gaussian_kernel_ck_residual(const ConstantCoefficientKernel& k, double s, double t,
                                   double x, double y, double half_width, int n_nodes);

struct BridgeMarginal {
    Vector mean;
    double variance = 0.0;  // isotropic: covariance = variance * I
};

// pinned Brownian motion marginal at interior time s, endpoints (x at 0, y at t)
BridgeMarginal brownian_bridge_marginal(double t, double s, const Vector& x, const Vector& y);

// ---- 1-d Crank-Nicolson oracle ----------------------------------------------

struct Grid1D {
    double x_min = -8.0;
    double x_max = 8.0;
    int n_cells = 1600;
    double dt = 5e-3;

    double dx() const { return (x_max - x_min) / n_cells; }
    int n_nodes() const { return n_cells + 1; }
    double node(int i) const { return x_min + i * dx(); }
    void validate() const;
};

struct CnSolution {
    Grid1D grid;
    std::vector<double> values;

    double value_at(double x) const;  // linear interpolation
    double mass() const;              // trapezoid integral
    // centered second difference of the solution at x (for bias budgets)
    double second_derivative_at(double x) const;
};

// Solves du/dt = 1/2 a u_xx + b u_x + c u on [x_min, x_max] with zero Dirichlet
// boundaries up to time t; initial condition is a Gaussian bump of the given
// width centered at x0 (a mollified delta).  Throws if the boundaries carry
// more than 1e-8 of the solution mass.
CnSolution crank_nicolson_1d(const CoefficientField& field, double x0, double init_width,
                             double t, const Grid1D& grid);

// same oracle with an arbitrary initial profile
CnSolution crank_nicolson_1d_profile(const CoefficientField& field,
                                     const std::function<double(double)>& initial, double t,
                                     const Grid1D& grid);

// mollified-delta bias estimate: compares widths w and 2w at x
double cn_delta_bias(const CoefficientField& field, double x0, double init_width, double t,
                     const Grid1D& grid, double x);

// ---- coupling oracle (d == 1, sigma == 1) -----------------------------------

// P(tau > s) for the reflection-coupled pair at initial separation delta:
// the distance process is delta + 2B, and the survival is erf(delta/(2 sqrt(2s)))
double coupling_survival_1d_bm(double delta, double s);

// E[t ^ tau] by quadrature of the survival function
double coupling_e_t_tau_1d_bm(double delta, double t);

// ---- backward-equation residual ----------------------------------------------

// finite-difference residual of d/ds p + 1/2 sum a_ij d2/dx_i dx_j p = 0
// on the analytic kernel (b0 = 0, c0 = 0), evaluated at backward time s
double backward_residual_check(const ConstantCoefficientKernel& k, double t, const Vector& x,
                               const Vector& y, double fd_step, double s);

} // namespace parakern

#endif
