#include "parakern/reference.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace parakern {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

ConstantCoefficientKernel ConstantCoefficientKernel::from_field(const CoefficientField& field) {
    return ConstantCoefficientKernel{field.const_a(), field.const_b(), field.const_c()};
}

double gaussian_kernel(const ConstantCoefficientKernel& k, double t, const Vector& x,
                       const Vector& y) {
    if (t <= 0.0) throw ValidationError("gaussian_kernel: t must be positive");
    const int d = k.dim();
    Eigen::LLT<Matrix> llt(k.a0);
    if (llt.info() != Eigen::Success)
        throw NumericalError("gaussian_kernel: a0 is singular or not positive definite");
    const Vector z = y - x - k.b0 * t;
    const double quad = z.dot(llt.solve(z)) / (2.0 * t);
    double log_det = 0.0;
    const Matrix& l = llt.matrixL();
    for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
    const double log_norm = -0.5 * d * std::log(kTwoPi * t) - 0.5 * log_det;
    return std::exp(log_norm - quad + k.c0 * t);
}

double gaussian_kernel_1d(const ConstantCoefficientKernel& k, double t, double x, double y) {
    Vector xv(1), yv(1);
    xv[0] = x;
    yv[0] = y;
    return gaussian_kernel(k, t, xv, yv);
}

double gaussian_kernel_ck_residual(const ConstantCoefficientKernel& k, double s, double t,
                                   double x, double y, double half_width, int n_nodes) {
    if (k.dim() != 1) throw ValidationError("ck residual: d == 1 only");
    if (!(0.0 < s && s < t)) throw ValidationError("ck residual: need 0 < s < t");
    const int n = n_nodes | 1;
    const double lo = std::min(x, y) - half_width;
    const double hi = std::max(x, y) + half_width;
    const double hq = (hi - lo) / (n - 1);
    double integral = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xi = lo + i * hq;
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        integral += w * gaussian_kernel_1d(k, s, x, xi) * gaussian_kernel_1d(k, t - s, xi, y);
    }
    integral *= hq / 3.0;
    return std::abs(gaussian_kernel_1d(k, t, x, y) - integral);
}

BridgeMarginal brownian_bridge_marginal(double t, double s, const Vector& x, const Vector& y) {
    if (!(0.0 < s && s < t))
        throw ValidationError("brownian_bridge_marginal: need 0 < s < t");
    BridgeMarginal out;
    out.mean = x + (s / t) * (y - x);
    out.variance = s * (t - s) / t;
    return out;
}

void Grid1D::validate() const {
    if (!(x_max > x_min)) throw ValidationError("Grid1D: x_max must exceed x_min");
    if (n_cells < 8) throw ValidationError("Grid1D: too few cells");
    if (dt <= 0.0) throw ValidationError("Grid1D: dt must be positive");
    if (dt > dx())
        throw ValidationError("Grid1D: dt <= dx required for the accuracy target");
}

double CnSolution::value_at(double x) const {
    const double dx = grid.dx();
    if (x <= grid.x_min) return values.front();
    if (x >= grid.x_max) return values.back();
    const double u = (x - grid.x_min) / dx;
    const int i = std::min(static_cast<int>(u), grid.n_cells - 1);
    const double frac = u - i;
    return values[static_cast<std::size_t>(i)] * (1.0 - frac) +
           values[static_cast<std::size_t>(i) + 1] * frac;
}

double CnSolution::mass() const {
    const double dx = grid.dx();
    double m = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) m += values[i];
    return m * dx;
}

double CnSolution::second_derivative_at(double x) const {
    const double dx = grid.dx();
    const double u = (x - grid.x_min) / dx;
    int i = static_cast<int>(u + 0.5);
    i = std::max(1, std::min(i, grid.n_cells - 1));
    return (values[static_cast<std::size_t>(i) + 1] - 2.0 * values[static_cast<std::size_t>(i)] +
            values[static_cast<std::size_t>(i) - 1]) /
           (dx * dx);
}

namespace {

// Thomas algorithm for a tridiagonal system; diag/upper/lower overwritten
void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag,
                       std::vector<double>& upper, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

CnSolution run_cn(const CoefficientField& field, std::vector<double> u, double t,
                  const Grid1D& grid) {
    grid.validate();
    if (field.dim() != 1) throw ValidationError("crank_nicolson_1d: d == 1 required");
    const int n = grid.n_nodes();
    const double dx = grid.dx();
    const int m_steps = std::max(1, static_cast<int>(std::ceil(t / grid.dt)));
    const double dt = t / m_steps;

    std::vector<double> lower(static_cast<std::size_t>(n)), diag(static_cast<std::size_t>(n)),
        upper(static_cast<std::size_t>(n)), rhs(static_cast<std::size_t>(n));
    Vector xv(1);

    for (int step = 0; step < m_steps; ++step) {
        const double tm = (step + 0.5) * dt;  // midpoint evaluation, 2nd order in time
        // interior rows: (I - dt/2 L) u_new = (I + dt/2 L) u_old
        rhs[0] = 0.0;
        rhs[static_cast<std::size_t>(n) - 1] = 0.0;
        lower[0] = upper[0] = 0.0;
        diag[0] = 1.0;
        lower[static_cast<std::size_t>(n) - 1] = upper[static_cast<std::size_t>(n) - 1] = 0.0;
        diag[static_cast<std::size_t>(n) - 1] = 1.0;
        for (int i = 1; i < n - 1; ++i) {
            const double x = grid.node(i);
            double a, b, c;
            if (field.has_scalar_forms()) {
                a = field.a1(tm, x);
                b = field.b1(tm, x);
                c = field.c1(tm, x);
            } else {
                xv[0] = x;
                a = field.a(tm, xv)(0, 0);
                b = field.b(tm, xv)(0);
                c = field.c(tm, xv);
            }
            const double alpha = 0.5 * a / (dx * dx);
            const double beta = b / (2.0 * dx);
            // L u |_i = alpha (u_{i+1} - 2 u_i + u_{i-1}) + beta (u_{i+1} - u_{i-1}) + c u_i
            const double lo = alpha - beta;
            const double di = -2.0 * alpha + c;
            const double up = alpha + beta;
            lower[static_cast<std::size_t>(i)] = -0.5 * dt * lo;
            diag[static_cast<std::size_t>(i)] = 1.0 - 0.5 * dt * di;
            upper[static_cast<std::size_t>(i)] = -0.5 * dt * up;
            rhs[static_cast<std::size_t>(i)] =
                u[static_cast<std::size_t>(i)] +
                0.5 * dt *
                    (lo * u[static_cast<std::size_t>(i) - 1] + di * u[static_cast<std::size_t>(i)] +
                     up * u[static_cast<std::size_t>(i) + 1]);
        }
        solve_tridiagonal(lower, diag, upper, rhs);
        u = rhs;
    }

    CnSolution out;
    out.grid = grid;
    out.values = std::move(u);

    double boundary = 0.0;
    for (int i = 0; i < 3; ++i)
        boundary += std::abs(out.values[static_cast<std::size_t>(i)]) +
                    std::abs(out.values[out.values.size() - 1 - static_cast<std::size_t>(i)]);
    if (boundary * dx > 1e-8)
        throw ValidationError("crank_nicolson_1d: boundary mass " + std::to_string(boundary * dx) +
                              " exceeds 1e-8, widen the grid");
    return out;
}

} // namespace

CnSolution crank_nicolson_1d(const CoefficientField& field, double x0, double init_width,
                             double t, const Grid1D& grid) {
    const int n = grid.n_nodes();
    std::vector<double> u(static_cast<std::size_t>(n));
    const double w = init_width;
    const double norm = 1.0 / (w * std::sqrt(kTwoPi));
    for (int i = 0; i < n; ++i) {
        const double z = (grid.node(i) - x0) / w;
        u[static_cast<std::size_t>(i)] = norm * std::exp(-0.5 * z * z);
    }
    return run_cn(field, std::move(u), t, grid);
}

CnSolution crank_nicolson_1d_profile(const CoefficientField& field,
                                     const std::function<double(double)>& initial, double t,
                                     const Grid1D& grid) {
    const int n = grid.n_nodes();
    std::vector<double> u(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) u[static_cast<std::size_t>(i)] = initial(grid.node(i));
    return run_cn(field, std::move(u), t, grid);
}

double cn_delta_bias(const CoefficientField& field, double x0, double init_width, double t,
                     const Grid1D& grid, double x) {
    const CnSolution fine = crank_nicolson_1d(field, x0, init_width, t, grid);
    const CnSolution coarse = crank_nicolson_1d(field, x0, 2.0 * init_width, t, grid);
    // smoothing error scales with width^2, so |u_w - u_2w| = 3 * bias(w)
    return std::abs(fine.value_at(x) - coarse.value_at(x)) / 3.0;
}

double coupling_survival_1d_bm(double delta, double s) {
    if (delta < 0.0 || s < 0.0)
        throw ValidationError("coupling_survival_1d_bm: negative argument");
    if (delta == 0.0) return 0.0;
    if (s == 0.0) return 1.0;
    return std::erf(delta / (2.0 * std::sqrt(2.0 * s)));
}

double coupling_e_t_tau_1d_bm(double delta, double t) {
    if (t <= 0.0) return 0.0;
    if (delta <= 0.0) return 0.0;
    // substitute s = u^2 to remove the root singularity at 0, then Simpson
    const int n = 4001;
    const double umax = std::sqrt(t);
    const double hu = umax / (n - 1);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = i * hu;
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double s = u * u;
        const double surv = s == 0.0 ? 1.0 : coupling_survival_1d_bm(delta, s);
        total += w * 2.0 * u * surv;
    }
    return total * hu / 3.0;
}

double backward_residual_check(const ConstantCoefficientKernel& k, double t, const Vector& x,
                               const Vector& y, double fd_step, double s) {
    if (k.b0.cwiseAbs().maxCoeff() != 0.0 || k.c0 != 0.0)
        throw ValidationError("backward_residual_check: kernel must have b0 = 0, c0 = 0");
    if (!(s + fd_step < t && s - fd_step > -t))
        throw ValidationError("backward_residual_check: s too close to t");
    const int d = k.dim();
    auto p = [&](double ss, const Vector& xx) { return gaussian_kernel(k, t - ss, xx, y); };

    const double e = fd_step;
    const double dp_ds = (p(s + e, x) - p(s - e, x)) / (2.0 * e);

    double lap = 0.0;
    Vector xp = x, xm = x;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (k.a0(i, j) == 0.0) continue;
            double second;
            if (i == j) {
                xp = x; xp[i] += e;
                xm = x; xm[i] -= e;
                second = (p(s, xp) - 2.0 * p(s, x) + p(s, xm)) / (e * e);
            } else {
                Vector xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[i] += e; xpp[j] += e;
                xpm[i] += e; xpm[j] -= e;
                xmp[i] -= e; xmp[j] += e;
                xmm[i] -= e; xmm[j] -= e;
                second = (p(s, xpp) - p(s, xpm) - p(s, xmp) + p(s, xmm)) / (4.0 * e * e);
            }
            lap += k.a0(i, j) * second;
        }
    }
    return dp_ds + 0.5 * lap;
}

} // namespace parakern
