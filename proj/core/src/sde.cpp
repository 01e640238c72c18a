#include "parakern/sde.hpp"

#include "parakern/parallel.hpp"

#include <cmath>
#include <string>

namespace parakern {

namespace {

std::string location_msg(std::size_t path, int step, double t) {
    return "path " + std::to_string(path) + ", step " + std::to_string(step) +
           ", t=" + std::to_string(t);
}

// per-path scratch shared by the streaming loops
struct ScalarField1 {
    const CoefficientField& f;
    double lo, hi;  // admissible a range with tolerance

    explicit ScalarField1(const CoefficientField& field)
        : f(field),
          lo((1.0 / field.lambda()) * (1.0 - 1e-9)),
          hi(field.lambda() * (1.0 + 1e-9)) {}

    double sigma(double t, double x, std::size_t path, int step) const {
        const double a = f.a1(t, x);
        if (a < lo || a > hi)
            throw NumericalError("ellipticity violation at " + location_msg(path, step, t) +
                                 ", a=" + std::to_string(a));
        return std::sqrt(a);
    }
};

struct GenericEval {
    SigmaEval se;
    void compute(const CoefficientField& f, double t, const Vector& x, std::size_t path,
                 int step) {
        se = sigma_eval(f.a(t, x));
        const double lo = (1.0 / f.lambda()) * (1.0 - 1e-9);
        const double hi = f.lambda() * (1.0 + 1e-9);
        if (se.min_eig < lo || se.max_eig > hi)
            throw NumericalError("ellipticity violation at " + location_msg(path, step, t));
    }
};

} // namespace

Vector euler_step(const CoefficientField& field, double t, const Vector& x, const Vector& db) {
    return x + sqrt_spd(field.a(t, x)) * db;
}

std::vector<Trajectory> simulate_paths(const CoefficientField& field, const Vector& x0,
                                       const TimeGrid& grid, int n_paths, const McRunSpec& run) {
    if (n_paths < 1) throw ValidationError("simulate_paths: n_paths must be >= 1");
    if (x0.size() != field.dim()) throw ValidationError("simulate_paths: x0 dimension mismatch");
    const int d = field.dim();
    const int n = grid.n_steps;
    const double h = grid.h();
    const double sqh = std::sqrt(h);

    std::vector<Trajectory> out(static_cast<std::size_t>(n_paths));
    const bool constant = field.is_constant();
    Matrix sigma0;
    if (constant) sigma0 = sqrt_spd(field.const_a());

    parallel_chunks(static_cast<std::size_t>(n_paths), run.chunk_size, run.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        GenericEval ev;
        for (std::size_t i = begin; i < end; ++i) {
            RngStream rng(run.master_seed, run.stream_base + i);
            Trajectory& traj = out[i];
            traj.grid = grid;
            traj.states.resize(d, n + 1);
            traj.increments.resize(d, n);
            traj.states.col(0) = x0;
            Vector x = x0, db(d);
            for (int k = 0; k < n; ++k) {
                const double t = grid.time_at(k);
                for (int j = 0; j < d; ++j) db[j] = sqh * rng.normal();
                traj.increments.col(k) = db;
                if (constant) {
                    x += sigma0 * db;
                } else {
                    ev.compute(field, t, x, i, k);
                    x += ev.se.sigma * db;
                }
                traj.states.col(k + 1) = x;
            }
        }
    });
    return out;
}

WeightAccumulator accumulate_weight(const Trajectory& traj, const CoefficientField& field) {
    WeightAccumulator acc;
    const int n = traj.grid.n_steps;
    const double h = traj.grid.h();
    const bool drift = field.has_drift();
    const bool pot = field.has_potential();
    if (!drift && !pot) return acc;

    for (int k = 0; k < n; ++k) {
        const double t = traj.grid.time_at(k);
        const Vector x = traj.states.col(k);
        if (drift) {
            const SigmaEval se = sigma_eval(field.a(t, x));
            const Vector bs = se.sigma_inv * field.b(t, x);
            acc.log_stoch += bs.dot(traj.increments.col(k));
            acc.log_quad -= 0.5 * bs.squaredNorm() * h;
        }
        if (pot) acc.log_pot += field.c(t, x) * h;
        if (!std::isfinite(acc.total()))
            throw NumericalError("accumulate_weight: non-finite log-weight at step " +
                                 std::to_string(k));
    }
    return acc;
}

std::pair<WeightAccumulator, WeightAccumulator> weight_split(const Trajectory& traj,
                                                             const CoefficientField& field,
                                                             int tau_step) {
    const int n = traj.grid.n_steps;
    if (tau_step < 0 || tau_step > n)
        throw ValidationError("weight_split: split index out of range");

    WeightAccumulator head, tail;
    const double h = traj.grid.h();
    const bool drift = field.has_drift();
    const bool pot = field.has_potential();
    for (int k = 0; k < n; ++k) {
        WeightAccumulator& acc = k < tau_step ? head : tail;
        const double t = traj.grid.time_at(k);
        const Vector x = traj.states.col(k);
        if (drift) {
            const SigmaEval se = sigma_eval(field.a(t, x));
            const Vector bs = se.sigma_inv * field.b(t, x);
            acc.log_stoch += bs.dot(traj.increments.col(k));
            acc.log_quad -= 0.5 * bs.squaredNorm() * h;
        }
        if (pot) acc.log_pot += field.c(t, x) * h;
    }
    return {head, tail};
}

namespace {

// streaming single-path simulation; writes the endpoint and log-weight
template <bool kScalar>
void run_path(const CoefficientField& field, const Vector& x0, const TimeGrid& grid,
              std::size_t path_index, RngStream& rng, const ScalarField1* sf, Vector& x_out,
              double& logw_out) {
    const int d = field.dim();
    const int n = grid.n_steps;
    const double h = grid.h();
    const double sqh = std::sqrt(h);
    const bool drift = field.has_drift();
    const bool pot = field.has_potential();
    double logw = 0.0;

    if constexpr (kScalar) {
        double x = x0[0];
        for (int k = 0; k < n; ++k) {
            const double t = grid.time_at(k);
            const double sig = sf->sigma(t, x, path_index, k);
            const double db = sqh * rng.normal();
            if (drift) {
                const double bs = field.b1(t, x) / sig;
                logw += bs * db - 0.5 * bs * bs * h;
            }
            if (pot) logw += field.c1(t, x) * h;
            x += sig * db;
        }
        x_out[0] = x;
        logw_out = logw;
    } else {
        const bool constant = field.is_constant();
        SigmaEval se0;
        Vector bsig0;
        double c0 = 0.0;
        if (constant) {
            se0 = sigma_eval(field.const_a());
            bsig0 = se0.sigma_inv * field.const_b();
            c0 = field.const_c();
        }
        GenericEval ev;
        Vector x = x0, db(d);
        for (int k = 0; k < n; ++k) {
            const double t = grid.time_at(k);
            for (int j = 0; j < d; ++j) db[j] = sqh * rng.normal();
            if (constant) {
                if (drift) {
                    logw += bsig0.dot(db) - 0.5 * bsig0.squaredNorm() * h;
                }
                if (pot) logw += c0 * h;
                x += se0.sigma * db;
            } else {
                ev.compute(field, t, x, path_index, k);
                if (drift) {
                    const Vector bs = ev.se.sigma_inv * field.b(t, x);
                    logw += bs.dot(db) - 0.5 * bs.squaredNorm() * h;
                }
                if (pot) logw += field.c(t, x) * h;
                x += ev.se.sigma * db;
            }
        }
        x_out = x;
        logw_out = logw;
    }
    if (!std::isfinite(logw_out))
        throw NumericalError("weight overflow on path " + std::to_string(path_index) +
                             "; use a smaller horizon or rescale the coefficients");
}

} // namespace

EndpointBatch sample_endpoints(const CoefficientField& field, const Vector& x0,
                               const TimeGrid& grid, std::size_t n_paths, const McRunSpec& run) {
    if (n_paths == 0) throw ValidationError("sample_endpoints: n_paths must be >= 1");
    const int d = field.dim();
    EndpointBatch out;
    out.endpoints.resize(d, static_cast<Eigen::Index>(n_paths));
    out.log_weights.resize(static_cast<Eigen::Index>(n_paths));

    const bool scalar = d == 1 && field.has_scalar_forms();
    parallel_chunks(n_paths, run.chunk_size, run.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        const ScalarField1 sf(field);
        Vector x(d);
        double logw;
        for (std::size_t i = begin; i < end; ++i) {
            RngStream rng(run.master_seed, run.stream_base + i);
            if (scalar)
                run_path<true>(field, x0, grid, i, rng, &sf, x, logw);
            else
                run_path<false>(field, x0, grid, i, rng, nullptr, x, logw);
            out.endpoints.col(static_cast<Eigen::Index>(i)) = x;
            out.log_weights[static_cast<Eigen::Index>(i)] = logw;
        }
    });
    return out;
}

std::vector<EndpointBatch> sample_endpoints_crn(const CoefficientField& field,
                                                const std::vector<Vector>& starts,
                                                const TimeGrid& grid, std::size_t n_paths,
                                                const McRunSpec& run) {
    if (starts.empty()) throw ValidationError("sample_endpoints_crn: no start points");
    const int d = field.dim();
    const std::size_t m = starts.size();
    std::vector<EndpointBatch> out(m);
    for (auto& batch : out) {
        batch.endpoints.resize(d, static_cast<Eigen::Index>(n_paths));
        batch.log_weights.resize(static_cast<Eigen::Index>(n_paths));
    }

    const int n = grid.n_steps;
    const double h = grid.h();
    const double sqh = std::sqrt(h);
    const bool drift = field.has_drift();
    const bool pot = field.has_potential();
    const bool scalar = d == 1 && field.has_scalar_forms();

    parallel_chunks(n_paths, run.chunk_size, run.workers,
                    [&](std::size_t, std::size_t begin, std::size_t end) {
        const ScalarField1 sf(field);
        GenericEval ev;
        std::vector<double> xs(m), lw(m);
        std::vector<Vector> xv(m);
        Vector db(d);
        for (std::size_t i = begin; i < end; ++i) {
            RngStream rng(run.master_seed, run.stream_base + i);
            if (scalar) {
                for (std::size_t j = 0; j < m; ++j) {
                    xs[j] = starts[j][0];
                    lw[j] = 0.0;
                }
                for (int k = 0; k < n; ++k) {
                    const double t = grid.time_at(k);
                    const double dbs = sqh * rng.normal();
                    for (std::size_t j = 0; j < m; ++j) {
                        const double sig = sf.sigma(t, xs[j], i, k);
                        if (drift) {
                            const double bs = field.b1(t, xs[j]) / sig;
                            lw[j] += bs * dbs - 0.5 * bs * bs * h;
                        }
                        if (pot) lw[j] += field.c1(t, xs[j]) * h;
                        xs[j] += sig * dbs;
                    }
                }
                for (std::size_t j = 0; j < m; ++j) {
                    out[j].endpoints(0, static_cast<Eigen::Index>(i)) = xs[j];
                    out[j].log_weights[static_cast<Eigen::Index>(i)] = lw[j];
                    if (!std::isfinite(lw[j]))
                        throw NumericalError("weight overflow on path " + std::to_string(i));
                }
            } else {
                for (std::size_t j = 0; j < m; ++j) {
                    xv[j] = starts[j];
                    lw[j] = 0.0;
                }
                for (int k = 0; k < n; ++k) {
                    const double t = grid.time_at(k);
                    for (int jj = 0; jj < d; ++jj) db[jj] = sqh * rng.normal();
                    for (std::size_t j = 0; j < m; ++j) {
                        ev.compute(field, t, xv[j], i, k);
                        if (drift) {
                            const Vector bs = ev.se.sigma_inv * field.b(t, xv[j]);
                            lw[j] += bs.dot(db) - 0.5 * bs.squaredNorm() * h;
                        }
                        if (pot) lw[j] += field.c(t, xv[j]) * h;
                        xv[j] += ev.se.sigma * db;
                    }
                }
                for (std::size_t j = 0; j < m; ++j) {
                    out[j].endpoints.col(static_cast<Eigen::Index>(i)) = xv[j];
                    out[j].log_weights[static_cast<Eigen::Index>(i)] = lw[j];
                    if (!std::isfinite(lw[j]))
                        throw NumericalError("weight overflow on path " + std::to_string(i));
                }
            }
        }
    });
    return out;
}

MeanStderr feynman_kac_solve(const CoefficientField& field,
                             const std::function<double(const Vector&)>& f, const Vector& x0,
                             const TimeGrid& grid, std::size_t n_paths, const McRunSpec& run) {
    const EndpointBatch batch = sample_endpoints(field, x0, grid, n_paths, run);
    std::vector<double> values(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i) {
        const double v = f(batch.endpoints.col(static_cast<Eigen::Index>(i))) *
                         std::exp(batch.log_weights[static_cast<Eigen::Index>(i)]);
        if (!std::isfinite(v))
            throw NumericalError("feynman_kac_solve: weight overflow on path " +
                                 std::to_string(i) +
                                 "; use a smaller horizon or rescale the coefficients");
        values[i] = v;
    }
    return mean_stderr(values);
}

Trajectory simulate_bridge(const CoefficientField& field, const Vector& x, const Vector& y,
                           const TimeGrid& grid, RngStream& rng) {
    if (!field.is_constant())
        throw ValidationError("simulate_bridge: field '" + field.name() +
                              "' has no analytic transition kernel");
    const int d = field.dim();
    const int n = grid.n_steps;
    const double h = grid.h();
    const double sqh = std::sqrt(h);
    const Matrix sigma = sqrt_spd(field.const_a());

    Trajectory traj;
    traj.grid = grid;
    traj.states.resize(d, n + 1);
    traj.increments = Matrix::Zero(d, n);
    traj.states.col(0) = x;
    Vector xs = x, db(d);
    for (int k = 0; k < n; ++k) {
        const double s = grid.time_at(k);
        const double remaining = grid.t_end - s;
        if (remaining < 2.0 * h) {
            xs = y;  // endpoint handling: deterministic move once the drift blows up
        } else {
            for (int j = 0; j < d; ++j) db[j] = sqh * rng.normal();
            traj.increments.col(k) = db;
            xs += (y - xs) * (h / remaining) + sigma * db;
        }
        traj.states.col(k + 1) = xs;
    }
    return traj;
}

} // namespace parakern
