#include "parakern/coefficients.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>

namespace parakern {

namespace {

constexpr double kEigenFloor = 1e-14;

void require_symmetric(const Matrix& a) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale)
        throw ValidationError("sqrt_spd: input matrix is not symmetric");
}

} // namespace

Matrix sqrt_spd(const Matrix& a) {
    return sigma_eval(a).sigma;
}

SigmaEval sigma_eval(const Matrix& a) {
    if (a.rows() != a.cols()) throw ValidationError("sqrt_spd: matrix must be square");
    require_symmetric(a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success)
        throw NumericalError("sqrt_spd: eigendecomposition failed");
    Vector ev = es.eigenvalues();
    if (ev.minCoeff() < kEigenFloor)
        throw NumericalError("sqrt_spd: ellipticity violation, eigenvalue " +
                             std::to_string(ev.minCoeff()) + " below floor");
    Vector sq(ev.size()), isq(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double lam = std::max(ev[i], kEigenFloor);
        sq[i] = std::sqrt(lam);
        isq[i] = 1.0 / sq[i];
    }
    const Matrix& v = es.eigenvectors();
    SigmaEval out;
    out.sigma = v * sq.asDiagonal() * v.transpose();
    out.sigma_inv = v * isq.asDiagonal() * v.transpose();
    out.min_eig = ev.minCoeff();
    out.max_eig = ev.maxCoeff();
    return out;
}

CoefficientField::CoefficientField(int d, EllipticityBounds bounds, MatrixFn a, VectorFn b,
                                   ScalarFn c, double b_sup, double c_sup,
                                   bool a_spatially_smooth)
    : d_(d),
      bounds_(bounds),
      a_(std::move(a)),
      b_(std::move(b)),
      c_(std::move(c)),
      b_sup_(b_sup),
      c_sup_(c_sup),
      a_smooth_(a_spatially_smooth) {
    if (d_ < 1) throw ValidationError("CoefficientField: dimension must be positive");
    if (bounds_.lambda < 1.0)
        throw ValidationError("CoefficientField: lambda must be >= 1");
    if (b_sup_ < 0.0 || c_sup_ < 0.0)
        throw ValidationError("CoefficientField: sup norms must be nonnegative");
}

void CoefficientField::set_scalar_forms(Scalar1Fn a1, Scalar1Fn b1, Scalar1Fn c1) {
    if (d_ != 1) throw ValidationError("scalar forms only apply to d == 1 fields");
    a1_ = std::move(a1);
    b1_ = std::move(b1);
    c1_ = std::move(c1);
}

const Matrix& CoefficientField::const_a() const {
    if (!constant_a_) throw ValidationError("field '" + name_ + "' has no analytic kernel");
    return *constant_a_;
}
const Vector& CoefficientField::const_b() const {
    if (!constant_a_) throw ValidationError("field '" + name_ + "' has no analytic kernel");
    return constant_b_;
}
double CoefficientField::const_c() const {
    if (!constant_a_) throw ValidationError("field '" + name_ + "' has no analytic kernel");
    return constant_c_;
}

void CoefficientField::set_constant_data(Matrix a0, Vector b0, double c0) {
    constant_a_ = std::move(a0);
    constant_b_ = std::move(b0);
    constant_c_ = c0;
}

Vector b_sigma(const CoefficientField& field, double t, const Vector& x) {
    const SigmaEval se = sigma_eval(field.a(t, x));
    return se.sigma_inv * field.b(t, x);
}

EllipticityReport check_ellipticity(const CoefficientField& field, const GridSpec& grid) {
    EllipticityReport report;
    report.grid = grid;
    report.min_eig = std::numeric_limits<double>::infinity();
    report.max_eig = -std::numeric_limits<double>::infinity();

    const int d = field.dim();
    const int nt = std::max(1, grid.nt);
    const int nx = std::max(2, grid.nx);
    // tensor grid over the box; total points capped to keep reports desk-scale
    long total = nt;
    for (int k = 0; k < d; ++k) {
        total *= nx;
        if (total > 50'000'000L)
            throw ValidationError("check_ellipticity: grid too large, reduce nx or d");
    }

    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Vector x(d);
    Eigen::SelfAdjointEigenSolver<Matrix> es;
    for (int it = 0; it < nt; ++it) {
        const double t = nt == 1 ? grid.t0
                                 : grid.t0 + (grid.t1 - grid.t0) * it / (nt - 1);
        std::fill(idx.begin(), idx.end(), 0);
        for (;;) {
            for (int k = 0; k < d; ++k)
                x[k] = -grid.half_width + 2.0 * grid.half_width * idx[static_cast<std::size_t>(k)] / (nx - 1);
            const Matrix a = field.a(t, x);
            const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
            if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
                report.symmetric = false;
            es.compute(a, Eigen::EigenvaluesOnly);
            report.min_eig = std::min(report.min_eig, es.eigenvalues().minCoeff());
            report.max_eig = std::max(report.max_eig, es.eigenvalues().maxCoeff());

            int k = 0;
            while (k < d && ++idx[static_cast<std::size_t>(k)] == nx) idx[static_cast<std::size_t>(k++)] = 0;
            if (k == d) break;
        }
    }

    const double lam = field.lambda();
    const double tol = 1e-9 * lam;
    report.pass = report.symmetric && report.min_eig >= 1.0 / lam - tol &&
                  report.max_eig <= lam + tol;
    return report;
}

ContinuityReport estimate_modulus(const CoefficientField& field, double radius,
                                  int n_pairs, int t_samples, double t_max, RngStream& rng) {
    if (radius <= 0.0) throw ValidationError("estimate_modulus: radius must be positive");
    ContinuityReport report;
    report.radius = radius;
    const int d = field.dim();

    auto sample_in_ball = [&](Vector& x) {
        for (;;) {
            for (int k = 0; k < d; ++k) x[k] = radius * (2.0 * rng.uniform() - 1.0);
            if (x.norm() <= radius) return;
        }
    };

    Vector x(d), y(d);
    report.pairs.reserve(static_cast<std::size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        sample_in_ball(x);
        sample_in_ball(y);
        const double r = (x - y).norm();
        double sup = 0.0;
        for (int it = 0; it < std::max(1, t_samples); ++it) {
            const double t = t_samples <= 1 ? 0.0 : t_max * it / (t_samples - 1);
            sup = std::max(sup, (field.a(t, x) - field.a(t, y)).cwiseAbs().maxCoeff());
        }
        report.pairs.emplace_back(r, sup);
    }
    std::sort(report.pairs.begin(), report.pairs.end());

    report.envelope.reserve(report.pairs.size());
    double running = 0.0;
    for (const auto& [r, v] : report.pairs) {
        running = std::max(running, v);
        report.envelope.emplace_back(r, running);
    }
    return report;
}

double envelope_value(const ContinuityReport& report, double r) {
    double value = 0.0;
    for (const auto& [rr, v] : report.envelope) {
        if (rr > r) break;
        value = v;
    }
    return value;
}

A3Report estimate_a3_integral(const CoefficientField& field, const A3Spec& spec) {
    A3Report report;
    if (!field.a_spatially_smooth()) {
        report.applicable = false;
        return report;
    }
    const int d = field.dim();
    if (d > 2)
        throw ValidationError("estimate_a3_integral: quadrature supported for d <= 2");
    if (spec.theta < std::max(static_cast<double>(d), 2.0) ||
        (spec.theta <= 2.0))
        throw ValidationError("estimate_a3_integral: theta must lie in [d,inf) and (2,inf)");

    const int n = spec.nodes_per_axis | 1;  // Simpson needs an odd count
    const double hq = 2.0 * spec.half_width / (n - 1);
    auto simpson_w = [&](int i) {
        if (i == 0 || i == n - 1) return 1.0;
        return (i % 2 == 1) ? 4.0 : 2.0;
    };

    double sup_t = 0.0;
    Vector x(d), xp(d), xm(d);
    for (int it = 0; it < std::max(1, spec.t_samples); ++it) {
        const double t = spec.t_samples <= 1 ? 0.0 : spec.t_max * it / (spec.t_samples - 1);
        double total = 0.0;
        if (d == 1) {
            for (int i = 0; i < n; ++i) {
                x[0] = -spec.half_width + i * hq;
                xp = x; xp[0] += spec.fd_step;
                xm = x; xm[0] -= spec.fd_step;
                const double da = (field.a(t, xp)(0, 0) - field.a(t, xm)(0, 0)) / (2.0 * spec.fd_step);
                total += simpson_w(i) * std::pow(std::abs(da), spec.theta) *
                         std::exp(-spec.decay_m * std::abs(x[0]));
            }
            total *= hq / 3.0;
        } else {
            for (int i = 0; i < n; ++i) {
                x[0] = -spec.half_width + i * hq;
                for (int j = 0; j < n; ++j) {
                    x[1] = -spec.half_width + j * hq;
                    double integrand = 0.0;
                    for (int jj = 0; jj < d; ++jj) {
                        xp = x; xp[jj] += spec.fd_step;
                        xm = x; xm[jj] -= spec.fd_step;
                        const Matrix da = (field.a(t, xp) - field.a(t, xm)) / (2.0 * spec.fd_step);
                        for (int ii = 0; ii < d; ++ii)
                            integrand += std::pow(std::abs(da(ii, jj)), spec.theta);
                    }
                    total += simpson_w(i) * simpson_w(j) * integrand *
                             std::exp(-spec.decay_m * x.norm());
                }
            }
            total *= hq * hq / 9.0;
        }
        sup_t = std::max(sup_t, total);
    }
    report.value = sup_t;
    report.finite = std::isfinite(sup_t);
    return report;
}

CoefficientField make_constant_field(const Matrix& a0, const Vector& b0, double c0) {
    if (a0.rows() != a0.cols() || a0.rows() != b0.size())
        throw ValidationError("make_constant_field: inconsistent dimensions");
    const int d = static_cast<int>(a0.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(a0);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) throw ValidationError("make_constant_field: a0 must be positive definite");
    const double lambda = std::max({1.0, hi, 1.0 / lo});

    Matrix a = a0;
    Vector b = b0;
    CoefficientField field(
        d, EllipticityBounds{lambda},
        [a](double, const Vector&) { return a; },
        [b](double, const Vector&) { return b; },
        [c0](double, const Vector&) { return c0; },
        b0.norm(), std::abs(c0), true);
    field.set_constant_data(a0, b0, c0);
    if (d == 1) {
        const double av = a0(0, 0), bv = b0(0);
        field.set_scalar_forms([av](double, double) { return av; },
                               [bv](double, double) { return bv; },
                               [c0](double, double) { return c0; });
    }
    field.set_name("const");
    return field;
}

CoefficientField make_sin_a_field(int d) {
    CoefficientField field(
        d, EllipticityBounds{2.0},
        [d](double, const Vector& x) {
            Matrix a = Matrix::Zero(d, d);
            for (int k = 0; k < d; ++k) a(k, k) = 1.0 + 0.5 * std::sin(x[k]);
            return a;
        },
        [d](double, const Vector&) { return Vector::Zero(d); },
        [](double, const Vector&) { return 0.0; },
        0.0, 0.0, true);
    if (d == 1) {
        field.set_scalar_forms([](double, double x) { return 1.0 + 0.5 * std::sin(x); },
                               [](double, double) { return 0.0; },
                               [](double, double) { return 0.0; });
    }
    field.set_name("sin_a");
    return field;
}

CoefficientField make_disc_bc_field(int d) {
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
    CoefficientField field(
        d, EllipticityBounds{1.0},
        [d](double, const Vector&) { return Matrix::Identity(d, d); },
        [d, sgn](double, const Vector& x) {
            Vector b(d);
            for (int k = 0; k < d; ++k) b[k] = 0.5 * sgn(x[k]);
            return b;
        },
        [](double, const Vector& x) { return x[0] > 0.0 ? -0.1 : 0.0; },
        0.5 * std::sqrt(static_cast<double>(d)), 0.1, true);
    if (d == 1) {
        field.set_scalar_forms([](double, double) { return 1.0; },
                               [sgn](double, double x) { return 0.5 * sgn(x); },
                               [](double, double x) { return x > 0.0 ? -0.1 : 0.0; });
    }
    field.set_name("disc_bc");
    return field;
}

CoefficientField make_expression_field(const ExpressionFieldSpec& spec) {
    const int d = spec.d;
    if (static_cast<int>(spec.a.size()) != d)
        throw ValidationError("expression field: a must have d rows");
    for (const auto& row : spec.a)
        if (static_cast<int>(row.size()) != d)
            throw ValidationError("expression field: a must have d columns");
    if (static_cast<int>(spec.b.size()) != d)
        throw ValidationError("expression field: b must have d entries");

    auto a_exprs = std::make_shared<std::vector<Expression>>();
    bool smooth = true;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            a_exprs->push_back(Expression::parse(spec.a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], d));
            smooth = smooth && a_exprs->back().spatially_smooth();
        }
    auto b_exprs = std::make_shared<std::vector<Expression>>();
    for (int i = 0; i < d; ++i) b_exprs->push_back(Expression::parse(spec.b[static_cast<std::size_t>(i)], d));
    auto c_expr = std::make_shared<Expression>(Expression::parse(spec.c, d));

    CoefficientField field(
        d, EllipticityBounds{spec.lambda},
        [d, a_exprs](double t, const Vector& x) {
            Matrix a(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    a(i, j) = (*a_exprs)[static_cast<std::size_t>(i * d + j)].eval(t, x);
            return a;
        },
        [d, b_exprs](double t, const Vector& x) {
            Vector b(d);
            for (int i = 0; i < d; ++i) b[i] = (*b_exprs)[static_cast<std::size_t>(i)].eval(t, x);
            return b;
        },
        [c_expr](double t, const Vector& x) { return c_expr->eval(t, x); },
        spec.b_sup, spec.c_sup, smooth);

    if (d == 1) {
        field.set_scalar_forms(
            [a_exprs](double t, double x) { return (*a_exprs)[0].eval1(t, x); },
            [b_exprs](double t, double x) { return (*b_exprs)[0].eval1(t, x); },
            [c_expr](double t, double x) { return c_expr->eval1(t, x); });
    }
    field.set_name("expression");
    return field;
}

CoefficientField shift_time(const CoefficientField& field, double shift) {
    auto base = std::make_shared<CoefficientField>(field);
    CoefficientField shifted(
        field.dim(), field.bounds(),
        [base, shift](double t, const Vector& x) { return base->a(t + shift, x); },
        [base, shift](double t, const Vector& x) { return base->b(t + shift, x); },
        [base, shift](double t, const Vector& x) { return base->c(t + shift, x); },
        field.b_sup(), field.c_sup(), field.a_spatially_smooth());
    if (field.has_scalar_forms()) {
        shifted.set_scalar_forms(
            [base, shift](double t, double x) { return base->a1(t + shift, x); },
            [base, shift](double t, double x) { return base->b1(t + shift, x); },
            [base, shift](double t, double x) { return base->c1(t + shift, x); });
    }
    if (field.is_constant())
        shifted.set_constant_data(field.const_a(), field.const_b(), field.const_c());
    shifted.set_name(field.name() + "+shift");
    return shifted;
}

} // namespace parakern
