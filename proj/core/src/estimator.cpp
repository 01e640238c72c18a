#include "parakern/estimator.hpp"

#include "parakern/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace parakern {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

const char* to_string(DensityEstimate::Kind kind) {
    switch (kind) {
        case DensityEstimate::Kind::Unweighted: return "unweighted";
        case DensityEstimate::Kind::Weighted: return "weighted";
        case DensityEstimate::Kind::Oracle: return "oracle";
    }
    return "unknown";
}

double scott_bandwidth(const Matrix& endpoints) {
    const Eigen::Index d = endpoints.rows();
    const Eigen::Index n = endpoints.cols();
    if (n < 2) throw ValidationError("scott_bandwidth: need at least 2 samples");
    double sigma_sum = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double mean = endpoints.row(i).mean();
        const double ss = (endpoints.row(i).array() - mean).square().sum();
        sigma_sum += std::sqrt(ss / static_cast<double>(n - 1));
    }
    const double sigma_hat = sigma_sum / static_cast<double>(d);
    return 1.06 * sigma_hat *
           std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
}

double gaussian_kde_kernel(double r2, double bandwidth, int d) {
    const double h2 = bandwidth * bandwidth;
    return std::pow(kTwoPi * h2, -0.5 * d) * std::exp(-0.5 * r2 / h2);
}

namespace {

DensityEstimate kde_impl(const Matrix& endpoints, const Vector* log_weights,
                         const Matrix& queries, double bandwidth, DensityEstimate::Kind kind) {
    const Eigen::Index n = endpoints.cols();
    const Eigen::Index m = queries.cols();
    const int d = static_cast<int>(endpoints.rows());
    if (n == 0) throw ValidationError("density estimate: empty sample");
    if (queries.rows() != endpoints.rows())
        throw ValidationError("density estimate: query dimension mismatch");
    if (!(bandwidth > 0.0)) throw ValidationError("density estimate: bandwidth must be positive");

    DensityEstimate out;
    out.queries = queries;
    out.values.resize(m);
    out.stderrs.resize(m);
    out.bandwidth = bandwidth;
    out.n_paths = static_cast<std::size_t>(n);
    out.kind = kind;

    double shift = 0.0;
    if (log_weights) {
        if (log_weights->size() != n)
            throw ValidationError("density estimate: weight count mismatch");
        shift = log_weights->maxCoeff();
        if (!std::isfinite(shift)) shift = 0.0;
    }

    const double h2 = bandwidth * bandwidth;
    const double norm = std::pow(kTwoPi * h2, -0.5 * d);
    for (Eigen::Index qi = 0; qi < m; ++qi) {
        double sum = 0.0, sum_sq = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r2 = (endpoints.col(i) - queries.col(qi)).squaredNorm();
            double v = norm * std::exp(-0.5 * r2 / h2);
            if (log_weights) v *= std::exp((*log_weights)[i] - shift);
            sum += v;
            sum_sq += v * v;
        }
        const double scale = log_weights ? std::exp(shift) : 1.0;
        const double mean = sum / static_cast<double>(n);
        out.values[qi] = mean * scale;
        if (n >= 2) {
            const double var =
                (sum_sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
            out.stderrs[qi] = std::sqrt(std::max(0.0, var / static_cast<double>(n))) * scale;
        } else {
            out.stderrs[qi] = 0.0;
        }
    }
    return out;
}

} // namespace

DensityEstimate estimate_px_density(const Matrix& endpoints, const Matrix& queries,
                                    double bandwidth) {
    return kde_impl(endpoints, nullptr, queries, bandwidth, DensityEstimate::Kind::Unweighted);
}

DensityEstimate weighted_density(const Matrix& endpoints, const Vector& log_weights,
                                 const Matrix& queries, double bandwidth) {
    return kde_impl(endpoints, &log_weights, queries, bandwidth, DensityEstimate::Kind::Weighted);
}

DensityEstimate estimate_fundamental(const CoefficientField& field, const Vector& x, double t,
                                     const Matrix& queries, std::size_t n_paths,
                                     const TimeGrid& grid, const McRunSpec& run,
                                     double bandwidth) {
    (void)t;
    const EndpointBatch batch = sample_endpoints(field, x, grid, n_paths, run);
    const double h = bandwidth > 0.0 ? bandwidth : scott_bandwidth(batch.endpoints);
    return weighted_density(batch.endpoints, batch.log_weights, queries, h);
}

MeanStderr pinned_expectation(const Matrix& endpoints, const Vector& log_weights,
                              const Vector& y, double bandwidth) {
    const Eigen::Index n = endpoints.cols();
    if (n == 0) throw ValidationError("pinned_expectation: empty sample");
    const int d = static_cast<int>(endpoints.rows());
    const double h2 = bandwidth * bandwidth;
    const double norm = std::pow(kTwoPi * h2, -0.5 * d);
    const double shift = log_weights.maxCoeff();

    // ratio estimator r = sum(w K) / sum(K); stderr by the delta method
    double sk = 0.0, swk = 0.0, sk2 = 0.0;
    std::vector<double> kv(static_cast<std::size_t>(n)), wkv(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r2 = (endpoints.col(i) - y).squaredNorm();
        const double k = norm * std::exp(-0.5 * r2 / h2);
        const double wk = k * std::exp(log_weights[i] - shift);
        kv[static_cast<std::size_t>(i)] = k;
        wkv[static_cast<std::size_t>(i)] = wk;
        sk += k;
        swk += wk;
        sk2 += k * k;
    }
    if (sk <= 0.0)
        throw NumericalError("pinned_expectation: no kernel mass at the query point");
    const double n_eff = sk * sk / sk2;
    if (n_eff < 10.0)
        throw NumericalError("pinned_expectation: only " + std::to_string(n_eff) +
                             " effective samples near y; need at least 10");

    const double ratio_shifted = swk / sk;
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double r = wkv[static_cast<std::size_t>(i)] -
                         ratio_shifted * kv[static_cast<std::size_t>(i)];
        ss += r * r;
    }
    const double kbar = sk / static_cast<double>(n);
    const double var =
        ss / static_cast<double>(n - 1) / (static_cast<double>(n) * kbar * kbar);

    MeanStderr out;
    out.n = static_cast<std::size_t>(n);
    out.mean = ratio_shifted * std::exp(shift);
    out.stderr_ = std::sqrt(std::max(0.0, var)) * std::exp(shift);
    return out;
}

std::vector<std::pair<double, double>> histogram_density(const Matrix& endpoints, double lo,
                                                         double hi, double bin_width) {
    if (endpoints.rows() != 1) throw ValidationError("histogram_density: d == 1 only");
    if (!(bin_width > 0.0) || !(hi > lo))
        throw ValidationError("histogram_density: bad range or bin width");
    const int n_bins = static_cast<int>(std::ceil((hi - lo) / bin_width));
    std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
    const Eigen::Index n = endpoints.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = endpoints(0, i);
        if (x < lo || x >= hi) continue;
        const int b = std::min(n_bins - 1, static_cast<int>((x - lo) / bin_width));
        counts[static_cast<std::size_t>(b)] += 1.0;
    }
    std::vector<std::pair<double, double>> out;
    out.reserve(counts.size());
    for (int b = 0; b < n_bins; ++b)
        out.emplace_back(lo + (b + 0.5) * bin_width,
                         counts[static_cast<std::size_t>(b)] /
                             (static_cast<double>(n) * bin_width));
    return out;
}

double density_mass(const Matrix& endpoints, const Vector& log_weights, double lo, double hi,
                    int n_quad, double bandwidth) {
    if (endpoints.rows() != 1) throw ValidationError("density_mass: d == 1 only");
    const int n = std::max(9, n_quad) | 1;
    Matrix queries(1, n);
    for (int i = 0; i < n; ++i) queries(0, i) = lo + (hi - lo) * i / (n - 1);
    const DensityEstimate est = weighted_density(endpoints, log_weights, queries, bandwidth);
    const double hq = (hi - lo) / (n - 1);
    double mass = 0.5 * (est.values[0] + est.values[n - 1]);
    for (int i = 1; i < n - 1; ++i) mass += est.values[i];
    return mass * hq;
}

double GaussianEnvelope::lower(double t, double r, int d) const {
    return c_lower * std::exp(-c_lower * t) * std::pow(t, -0.5 * d) *
           std::exp(-gamma_lower * r * r / t);
}

double GaussianEnvelope::upper(double t, double r, int d) const {
    return c_upper * std::exp(c_upper * t) * std::pow(t, -0.5 * d) *
           std::exp(-gamma_upper * r * r / t);
}

namespace {

double envelope_violation_sigma(const std::vector<EnvelopePoint>& points, int d,
                                const GaussianEnvelope& env) {
    double worst = 0.0;
    for (const auto& p : points) {
        const double lo = env.lower(p.t, p.r, d);
        const double hi = env.upper(p.t, p.r, d);
        // exact inputs (stderr 0) get a tiny absolute allowance
        const double scale = p.stderr_ > 0.0 ? p.stderr_ : 1e-12 * std::max(1.0, p.value);
        worst = std::max(worst, (lo - p.value) / scale);
        worst = std::max(worst, (p.value - hi) / scale);
    }
    return std::max(0.0, worst);
}

} // namespace

EnvelopeFitReport fit_gaussian_envelope(const std::vector<EnvelopePoint>& points, int d) {
    if (points.size() < 3)
        throw ValidationError("fit_gaussian_envelope: need at least 3 grid points");
    for (const auto& p : points)
        if (!(p.value > 0.0) || !(p.t > 0.0))
            throw ValidationError("fit_gaussian_envelope: infeasible fit, nonpositive density "
                                  "or time in the grid");

    // central fit: log v + (d/2) log t = log C - gamma r^2/t  (least squares)
    std::vector<double> xs, ys;
    xs.reserve(points.size());
    ys.reserve(points.size());
    for (const auto& p : points) {
        xs.push_back(p.r * p.r / p.t);
        ys.push_back(std::log(p.value) + 0.5 * d * std::log(p.t));
    }
    const LineFit fit = fit_line(xs, ys);
    const double gamma0 = std::max(1e-8, -fit.slope);
    const double c0 = std::exp(fit.intercept);

    GaussianEnvelope env;
    env.gamma_lower = env.gamma_upper = gamma0;
    env.c_lower = env.c_upper = c0;

    // per-side compliance: scale C (and, if stuck, tilt gamma) until every point
    // sits inside [lower - 3 stderr, upper + 3 stderr]
    auto lower_violation = [&](const GaussianEnvelope& e) {
        double worst = 0.0;
        for (const auto& p : points) {
            const double scale = p.stderr_ > 0.0 ? p.stderr_ : 1e-12 * std::max(1.0, p.value);
            worst = std::max(worst, (e.lower(p.t, p.r, d) - p.value) / scale);
        }
        return worst;
    };
    auto upper_violation = [&](const GaussianEnvelope& e) {
        double worst = 0.0;
        for (const auto& p : points) {
            const double scale = p.stderr_ > 0.0 ? p.stderr_ : 1e-12 * std::max(1.0, p.value);
            worst = std::max(worst, (p.value - e.upper(p.t, p.r, d)) / scale);
        }
        return worst;
    };

    for (int round = 0; round < 40 && lower_violation(env) > 3.0; ++round) {
        int iter = 0;
        while (lower_violation(env) > 3.0 && iter++ < 400) env.c_lower *= 0.995;
        if (lower_violation(env) > 3.0) env.gamma_lower *= 1.02;  // tail too fat: decay faster
    }
    for (int round = 0; round < 40 && upper_violation(env) > 3.0; ++round) {
        int iter = 0;
        while (upper_violation(env) > 3.0 && iter++ < 400) env.c_upper *= 1.005;
        if (upper_violation(env) > 3.0) env.gamma_upper *= 0.98;  // tail too thin: decay slower
    }

    EnvelopeFitReport report;
    report.envelope = env;
    report.max_violation_sigma = envelope_violation_sigma(points, d, env);
    report.pass = report.max_violation_sigma <= 3.0;
    return report;
}

HolderReport estimate_holder_exponent(const CoefficientField& field, const Vector& x0,
                                      const Vector& direction,
                                      const std::vector<double>& deltas, double t,
                                      const Vector& y, std::size_t n_paths,
                                      const TimeGrid& grid, const McRunSpec& run,
                                      double bandwidth, bool common_random_numbers) {
    (void)t;
    if (deltas.size() < 3)
        throw ValidationError("estimate_holder_exponent: need at least 3 separations");
    const Vector dir = direction / direction.norm();
    const int d = field.dim();

    std::vector<Vector> starts;
    starts.push_back(x0);
    for (double delta : deltas) starts.push_back(x0 + delta * dir);

    std::vector<EndpointBatch> batches;
    if (common_random_numbers) {
        batches = sample_endpoints_crn(field, starts, grid, n_paths, run);
    } else {
        McRunSpec sub = run;
        for (std::size_t j = 0; j < starts.size(); ++j) {
            sub.stream_base = run.stream_base + j * (1ULL << 32);
            batches.push_back(sample_endpoints(field, starts[j], grid, n_paths, sub));
        }
    }

    const double bw = bandwidth > 0.0 ? bandwidth : scott_bandwidth(batches[0].endpoints);
    const double h2 = bw * bw;
    const double norm = std::pow(kTwoPi * h2, -0.5 * d);
    auto point_value = [&](const EndpointBatch& b, Eigen::Index i) {
        const double r2 = (b.endpoints.col(i) - y).squaredNorm();
        return norm * std::exp(-0.5 * r2 / h2) * std::exp(b.log_weights[i]);
    };

    HolderReport report;
    report.x0 = x0;
    report.direction = dir;
    report.deltas = deltas;

    const Eigen::Index n = static_cast<Eigen::Index>(n_paths);
    std::vector<double> diff(static_cast<std::size_t>(n));
    bool any_signal = false;
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        for (Eigen::Index i = 0; i < n; ++i)
            diff[static_cast<std::size_t>(i)] =
                point_value(batches[0], i) - point_value(batches[j + 1], i);
        const MeanStderr ms = mean_stderr(diff);
        report.diffs.push_back(std::abs(ms.mean));
        report.stderrs.push_back(ms.stderr_);
        if (std::abs(ms.mean) > 2.0 * ms.stderr_) any_signal = true;
    }
    if (!any_signal) {
        // recommend scaling n by the worst squared noise-to-signal ratio
        double factor = 0.0;
        for (std::size_t j = 0; j < deltas.size(); ++j) {
            const double ratio = report.stderrs[j] / std::max(report.diffs[j], 1e-300);
            factor = std::max(factor, 4.0 * ratio * ratio);
        }
        throw NumericalError(
            "estimate_holder_exponent: differences indistinguishable from 0 at all "
            "separations; increase n_paths by a factor of about " +
            std::to_string(factor));
    }

    std::vector<double> lx, ly, lvar;
    for (std::size_t j = 0; j < deltas.size(); ++j) {
        lx.push_back(std::log(deltas[j]));
        ly.push_back(std::log(std::max(report.diffs[j], 1e-300)));
        const double rel = report.stderrs[j] / std::max(report.diffs[j], 1e-300);
        lvar.push_back(std::max(rel * rel, 1e-12));
    }
    report.fit = fit_line_weighted(lx, ly, lvar);
    return report;
}

CkCheckReport chapman_kolmogorov_check(const CoefficientField& field, double x, double s,
                                       double t, const std::vector<double>& queries,
                                       std::size_t n_paths, int n_steps_per_leg,
                                       const McRunSpec& run, int n_xi) {
    if (field.dim() != 1)
        throw ValidationError("chapman_kolmogorov_check: d == 1 only");
    if (!(0.0 < s && s < t))
        throw ValidationError("chapman_kolmogorov_check: need 0 < s < t");

    Vector x0(1);
    x0[0] = x;

    // one step size everywhere, set by the second leg
    const double h_step = (t - s) / n_steps_per_leg;

    // direct estimate over [0, t]
    const TimeGrid grid_full(0.0, t, static_cast<int>(std::ceil(t / h_step)));
    const EndpointBatch direct = sample_endpoints(field, x0, grid_full, n_paths, run);
    const double bw_direct = scott_bandwidth(direct.endpoints);

    Matrix qm(1, static_cast<Eigen::Index>(queries.size()));
    for (std::size_t i = 0; i < queries.size(); ++i)
        qm(0, static_cast<Eigen::Index>(i)) = queries[i];
    const DensityEstimate direct_est =
        weighted_density(direct.endpoints, direct.log_weights, qm, bw_direct);

    // leg 1: [0, s] from x, evaluated on the xi quadrature grid
    const double lam = field.lambda();
    double qlo = x, qhi = x;
    for (double y : queries) {
        qlo = std::min(qlo, y);
        qhi = std::max(qhi, y);
    }
    const double wing = 4.5 * std::sqrt(lam * t);
    const int nxi = std::max(9, n_xi) | 1;
    const double lo = qlo - wing, hi = qhi + wing;
    const double hq = (hi - lo) / (nxi - 1);

    McRunSpec leg1_run = run;
    leg1_run.stream_base = run.stream_base + (1ULL << 40);
    const TimeGrid grid_leg1(0.0, s, static_cast<int>(std::ceil(s / h_step)));
    const EndpointBatch leg1 = sample_endpoints(field, x0, grid_leg1, n_paths, leg1_run);
    const double bw1 = scott_bandwidth(leg1.endpoints);
    Matrix xi_grid(1, nxi);
    for (int i = 0; i < nxi; ++i) xi_grid(0, i) = lo + i * hq;
    const DensityEstimate leg1_est =
        weighted_density(leg1.endpoints, leg1.log_weights, xi_grid, bw1);

    // leg 2: one run per node over the time-shifted field on [0, t-s]
    const CoefficientField shifted = shift_time(field, s);
    const TimeGrid grid_leg2(0.0, t - s, n_steps_per_leg);
    std::vector<DensityEstimate> leg2(static_cast<std::size_t>(nxi));
    for (int i = 0; i < nxi; ++i) {
        McRunSpec leg2_run = run;
        leg2_run.stream_base = run.stream_base + (2ULL << 40) + static_cast<std::uint64_t>(i) * (1ULL << 32);
        Vector xi0(1);
        xi0[0] = xi_grid(0, i);
        const EndpointBatch b = sample_endpoints(shifted, xi0, grid_leg2, n_paths, leg2_run);
        leg2[static_cast<std::size_t>(i)] =
            weighted_density(b.endpoints, b.log_weights, qm, scott_bandwidth(b.endpoints));
    }

    CkCheckReport report;
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        double composed = 0.0, var_composed = 0.0;
        for (int i = 0; i < nxi; ++i) {
            const double w = (i == 0 || i == nxi - 1) ? 0.5 * hq : hq;  // trapezoid
            const double p1 = leg1_est.values[i];
            const double e1 = leg1_est.stderrs[i];
            const double p2 = leg2[static_cast<std::size_t>(i)].values[static_cast<Eigen::Index>(qi)];
            const double e2 = leg2[static_cast<std::size_t>(i)].stderrs[static_cast<Eigen::Index>(qi)];
            composed += w * p1 * p2;
            var_composed += w * w * (p1 * p1 * e2 * e2 + p2 * p2 * e1 * e1);
        }
        CkCheckRow row;
        row.y = queries[qi];
        row.direct = direct_est.values[static_cast<Eigen::Index>(qi)];
        row.direct_stderr = direct_est.stderrs[static_cast<Eigen::Index>(qi)];
        row.composed = composed;
        row.composed_stderr = std::sqrt(var_composed);
        const double denom = std::sqrt(row.direct_stderr * row.direct_stderr + var_composed);
        row.residual_sigma = std::abs(row.direct - composed) / std::max(denom, 1e-300);
        report.max_residual_sigma = std::max(report.max_residual_sigma, row.residual_sigma);
        report.rows.push_back(row);
    }
    return report;
}

MomentBoundReport moment_bound_check(const CoefficientField& field,
                                     const std::vector<double>& q_list,
                                     const std::vector<double>& t_list, std::size_t n_paths,
                                     const Vector& x0, const McRunSpec& run,
                                     int n_steps_per_unit_time) {
    MomentBoundReport report;
    McRunSpec sub = run;
    std::vector<double> qlw(n_paths);
    for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
        const double t = t_list[ti];
        sub.stream_base = run.stream_base + ti * (1ULL << 32);
        const int steps = std::max(1, static_cast<int>(n_steps_per_unit_time * t));
        const TimeGrid grid(0.0, t, steps);
        const EndpointBatch batch = sample_endpoints(field, x0, grid, n_paths, sub);
        for (double q : q_list) {
            for (std::size_t i = 0; i < n_paths; ++i)
                qlw[i] = q * batch.log_weights[static_cast<Eigen::Index>(i)];
            const MeanStderr ms = exp_mean_stderr(qlw);
            MomentBoundRow row;
            row.q = q;
            row.t = t;
            row.log_moment = std::log(ms.mean);
            row.stderr_log = ms.stderr_ / ms.mean;
            report.rows.push_back(row);
        }
    }
    double c_hat = 0.0;
    for (const auto& row : report.rows) {
        const double denom = (1.0 + row.q * row.q) * row.t;
        c_hat = std::max(c_hat, (row.log_moment - 2.0 * row.stderr_log) / denom);
    }
    report.c_hat = std::max(0.0, c_hat);
    for (auto& row : report.rows) row.bound = report.c_hat * (1.0 + row.q * row.q) * row.t;
    return report;
}

double kde_bias_budget(double bandwidth, double second_derivative) {
    return 0.5 * bandwidth * bandwidth * std::abs(second_derivative);
}

} // namespace parakern
