#include "parakern/runner.hpp"

#include "parakern/coupling.hpp"
#include "parakern/estimator.hpp"
#include "parakern/reference.hpp"
#include "parakern/sde.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace parakern {

using nlohmann::json;
namespace fs = std::filesystem;

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open output file " + path.string());
    out << text;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string text;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) text += ',';
        text += header[i];
    }
    text += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) text += ',';
            text += row[i];
        }
        text += '\n';
    }
    write_text(path, text);
}

double require_double(const json& params, const std::string& key) {
    if (!params.contains(key))
        throw ValidationError("config: params." + key + " is required");
    return params.at(key).get<double>();
}

std::size_t require_count(const json& params, const std::string& key) {
    const double v = require_double(params, key);
    if (v < 1 || v != std::floor(v))
        throw ValidationError("config: params." + key + " must be a positive integer");
    return static_cast<std::size_t>(v);
}

Vector param_vector(const json& params, const std::string& key, int d, const Vector& fallback) {
    if (!params.contains(key)) return fallback;
    const json& v = params.at(key);
    Vector out(d);
    if (v.is_number()) {
        if (d != 1)
            throw ValidationError("config: params." + key + " must have length " +
                                  std::to_string(d));
        out[0] = v.get<double>();
        return out;
    }
    if (!v.is_array() || static_cast<int>(v.size()) != d)
        throw ValidationError("config: params." + key + " must have length " + std::to_string(d));
    for (int i = 0; i < d; ++i) out[i] = v[static_cast<std::size_t>(i)].get<double>();
    return out;
}

std::vector<double> param_list(const json& params, const std::string& key) {
    if (!params.contains(key))
        throw ValidationError("config: params." + key + " is required");
    const json& v = params.at(key);
    if (!v.is_array() || v.empty())
        throw ValidationError("config: params." + key + " must be a nonempty array");
    std::vector<double> out;
    for (const auto& cell : v) out.push_back(cell.get<double>());
    return out;
}

Matrix parse_queries(const json& params, int d) {
    if (!params.contains("queries"))
        throw ValidationError("config: params.queries is required");
    const json& q = params.at("queries");
    if (!q.is_array() || q.empty())
        throw ValidationError("config: params.queries must be a nonempty array");
    Matrix out(d, static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) {
        const json& cell = q[i];
        if (cell.is_number()) {
            if (d != 1) throw ValidationError("config: queries must be points of dimension " +
                                              std::to_string(d));
            out(0, static_cast<Eigen::Index>(i)) = cell.get<double>();
        } else {
            if (!cell.is_array() || static_cast<int>(cell.size()) != d)
                throw ValidationError("config: queries must be points of dimension " +
                                      std::to_string(d));
            for (int k = 0; k < d; ++k)
                out(k, static_cast<Eigen::Index>(i)) = cell[static_cast<std::size_t>(k)].get<double>();
        }
    }
    return out;
}

int default_steps(const json& params, double horizon, double lambda) {
    if (params.contains("n_steps")) {
        const int n = params.at("n_steps").get<int>();
        if (n < 1) throw ValidationError("config: params.n_steps must be positive");
        return n;
    }
    (void)horizon;
    return std::max(1, static_cast<int>(std::ceil(lambda * 1000.0)));
}

// bandwidth: missing or "scott" -> data-driven; number -> fixed
double param_bandwidth(const json& params) {
    if (!params.contains("bandwidth")) return 0.0;
    const json& b = params.at("bandwidth");
    if (b.is_string()) {
        if (b.get<std::string>() == "scott") return 0.0;
        throw ValidationError("config: bandwidth must be a number or \"scott\"");
    }
    const double v = b.get<double>();
    if (!(v > 0.0)) throw ValidationError("config: bandwidth must be positive");
    return v;
}

const CoefficientField& require_field(const ExperimentConfig& cfg) {
    if (!cfg.field)
        throw ValidationError("config: this experiment requires a 'field' entry");
    return *cfg.field;
}

McRunSpec make_run(const ExperimentConfig& cfg) {
    McRunSpec run;
    run.master_seed = cfg.seed;
    run.workers = cfg.workers;
    run.chunk_size = cfg.chunk_size;
    return run;
}

std::vector<std::vector<std::string>> density_rows(const DensityEstimate& est) {
    std::vector<std::vector<std::string>> rows;
    const int d = static_cast<int>(est.queries.rows());
    for (Eigen::Index i = 0; i < est.queries.cols(); ++i) {
        std::vector<std::string> row;
        for (int k = 0; k < d; ++k) row.push_back(fmt17(est.queries(k, i)));
        row.push_back(fmt17(est.values[i]));
        row.push_back(fmt17(est.stderrs[i]));
        row.push_back(std::to_string(est.n_paths));
        row.push_back(fmt17(est.bandwidth));
        row.push_back(to_string(est.kind));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> density_header(int d) {
    std::vector<std::string> header;
    for (int k = 0; k < d; ++k) header.push_back("y" + std::to_string(k));
    header.insert(header.end(), {"value", "stderr", "n", "bandwidth", "kind"});
    return header;
}

// ---- per-experiment runners --------------------------------------------------

void run_validate(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;

    GridSpec grid;
    grid.t0 = p.value("grid_t0", 0.0);
    grid.t1 = p.value("grid_t1", 1.0);
    grid.nt = p.value("grid_nt", 3);
    grid.half_width = p.value("grid_half_width", 5.0);
    grid.nx = p.value("grid_nx", 201);
    const EllipticityReport ell = check_ellipticity(field, grid);

    RngStream rng(cfg.seed, 0);
    const double radius = p.value("modulus_radius", 2.0);
    const ContinuityReport modulus =
        estimate_modulus(field, radius, p.value("modulus_pairs", 2000),
                         p.value("modulus_t_samples", 3), p.value("modulus_t_max", 1.0), rng);

    json checks = json::array();
    checks.push_back({{"check", "ellipticity"},
                      {"grid",
                       {{"t0", grid.t0},
                        {"t1", grid.t1},
                        {"nt", grid.nt},
                        {"half_width", grid.half_width},
                        {"nx", grid.nx}}},
                      {"min_eig", ell.min_eig},
                      {"max_eig", ell.max_eig},
                      {"pass", ell.pass}});

    json env = json::array();
    for (const auto& [r, v] : modulus.envelope) env.push_back({r, v});
    checks.push_back({{"check", "modulus"},
                      {"radius", radius},
                      {"envelope", env},
                      {"pass", true}});

    json a3;
    if (field.dim() <= 2) {
        A3Spec spec;
        spec.theta = p.value("a3_theta", std::max(3.0, static_cast<double>(field.dim())));
        spec.decay_m = p.value("a3_m", 1.0);
        spec.half_width = p.value("a3_half_width", 30.0);
        spec.nodes_per_axis = p.value("a3_nodes", field.dim() == 1 ? 4001 : 401);
        spec.fd_step = p.value("a3_fd_step", 1e-4);
        const A3Report rep = estimate_a3_integral(field, spec);
        a3 = {{"check", "a3_integral"}, {"theta", spec.theta},      {"m", spec.decay_m},
              {"applicable", rep.applicable}, {"value", rep.value}, {"finite", rep.finite},
              {"pass", !rep.applicable || rep.finite}};
    } else {
        a3 = {{"check", "a3_integral"}, {"applicable", false}, {"pass", true},
              {"note", "quadrature restricted to d <= 2"}};
    }
    checks.push_back(a3);

    bool all_pass = true;
    for (const auto& c : checks) all_pass = all_pass && c.at("pass").get<bool>();
    const json report = {{"field", field.name()}, {"checks", checks}, {"pass", all_pass}};
    write_text(dir / "validation.json", report.dump(2) + "\n");
}

void run_simulate(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;
    const int d = field.dim();
    const double t = require_double(p, "t");
    if (!(t > 0.0)) throw ValidationError("config: params.t must be positive");
    const std::size_t n_paths = require_count(p, "n_paths");
    const TimeGrid grid(0.0, t, default_steps(p, t, field.lambda()));
    const Vector x0 = param_vector(p, "x0", d, Vector::Zero(d));
    const McRunSpec run = make_run(cfg);

    const bool dump = p.value("dump_trajectories", false);
    EndpointBatch batch;
    if (dump) {
        if (n_paths > 1000)
            throw ValidationError("config: dump_trajectories is capped at 1000 paths");
        const auto paths = simulate_paths(field, x0, grid, static_cast<int>(n_paths), run);
        batch.endpoints.resize(d, static_cast<Eigen::Index>(n_paths));
        batch.log_weights.resize(static_cast<Eigen::Index>(n_paths));
        std::string blob;
        auto push_f64 = [&blob](double v) {
            blob.append(reinterpret_cast<const char*>(&v), sizeof(double));
        };
        push_f64(static_cast<double>(d));
        push_f64(static_cast<double>(grid.n_steps));
        push_f64(grid.h());
        for (std::size_t i = 0; i < n_paths; ++i) {
            const Trajectory& traj = paths[i];
            for (int k = 0; k <= grid.n_steps; ++k)
                for (int j = 0; j < d; ++j) push_f64(traj.states(j, k));
            batch.endpoints.col(static_cast<Eigen::Index>(i)) = traj.states.col(grid.n_steps);
            batch.log_weights[static_cast<Eigen::Index>(i)] =
                accumulate_weight(traj, field).total();
        }
        write_text(dir / "trajectories.bin", blob);
    } else {
        batch = sample_endpoints(field, x0, grid, n_paths, run);
    }

    std::vector<std::vector<std::string>> rows;
    for (int k = 0; k < d; ++k) {
        std::vector<double> coord(n_paths);
        for (std::size_t i = 0; i < n_paths; ++i)
            coord[i] = batch.endpoints(k, static_cast<Eigen::Index>(i));
        const MeanStderr ms = mean_stderr(coord);
        double ss = 0.0;
        for (double v : coord) ss += (v - ms.mean) * (v - ms.mean);
        const double var = ss / static_cast<double>(n_paths - 1);
        rows.push_back({"mean_x" + std::to_string(k), fmt17(ms.mean), fmt17(ms.stderr_)});
        rows.push_back({"var_x" + std::to_string(k), fmt17(var), ""});
    }
    std::vector<double> lw(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i)
        lw[i] = batch.log_weights[static_cast<Eigen::Index>(i)];
    const MeanStderr w = exp_mean_stderr(lw);
    rows.push_back({"weight_mean", fmt17(w.mean), fmt17(w.stderr_)});
    write_csv(dir / "summary.csv", {"quantity", "value", "stderr"}, rows);
}

void run_estimate(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;
    const int d = field.dim();
    const double t = require_double(p, "t");
    if (!(t > 0.0)) throw ValidationError("config: params.t must be positive");
    const std::size_t n_paths = require_count(p, "n_paths");
    if (n_paths < 1000)
        throw ValidationError("config: estimate requires n_paths >= 1000");
    const Vector x0 = param_vector(p, "x0", d, Vector::Zero(d));
    const Matrix queries = parse_queries(p, d);
    const TimeGrid grid(0.0, t, default_steps(p, t, field.lambda()));

    const DensityEstimate est = estimate_fundamental(field, x0, t, queries, n_paths, grid,
                                                     make_run(cfg), param_bandwidth(p));
    write_csv(dir / "density.csv", density_header(d), density_rows(est));
}

void run_couple(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;
    const int d = field.dim();
    const double t = require_double(p, "t");
    const std::size_t n_pairs = require_count(p, "n_pairs");
    const Vector x0 = param_vector(p, "x0", d, Vector::Zero(d));
    Vector dir_v = param_vector(p, "direction", d, Vector::Unit(d, 0));
    dir_v /= dir_v.norm();
    const TimeGrid grid(0.0, t, default_steps(p, t, field.lambda()));
    const McRunSpec run = make_run(cfg);

    const std::vector<std::string> stats_header = {"delta", "t", "e_t_tau", "stderr", "n_pairs"};
    if (p.contains("deltas")) {
        const std::vector<double> deltas = param_list(p, "deltas");
        const CouplingExponentReport rep =
            estimate_coupling_exponent(field, x0, dir_v, deltas, t, n_pairs, grid, run);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : rep.rows)
            rows.push_back({fmt17(r.delta), fmt17(r.t), fmt17(r.e_t_tau), fmt17(r.stderr_),
                            std::to_string(r.n_pairs)});
        write_csv(dir / "coupling_stats.csv", stats_header, rows);
        const json fit = {{"slope", rep.fit.slope},
                          {"intercept", rep.fit.intercept},
                          {"slope_stderr", rep.fit.slope_stderr},
                          {"ci_low", rep.fit.ci_low},
                          {"ci_high", rep.fit.ci_high}};
        write_text(dir / "exponent.json", fit.dump(2) + "\n");
        return;
    }

    const double delta = require_double(p, "delta");
    const Vector z = x0 + delta * dir_v;
    std::vector<double> survival_times;
    if (p.contains("survival_times")) survival_times = param_list(p, "survival_times");
    const CouplingStats stats =
        coupling_time_stats(field, x0, z, t, n_pairs, grid, run, survival_times);

    std::vector<std::vector<std::string>> srows;
    for (const auto& pt : stats.survival)
        srows.push_back({fmt17(pt.s), fmt17(pt.survival), fmt17(pt.stderr_)});
    write_csv(dir / "survival.csv", {"s", "survival", "stderr"}, srows);
    write_csv(dir / "coupling_stats.csv", stats_header,
              {{fmt17(stats.delta), fmt17(t), fmt17(stats.e_t_tau.mean),
                fmt17(stats.e_t_tau.stderr_), std::to_string(stats.n_pairs)}});
}

void run_holder(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;
    const int d = field.dim();
    const double t = require_double(p, "t");
    const std::size_t n_paths = require_count(p, "n_paths");
    const Vector x0 = param_vector(p, "x0", d, Vector::Zero(d));
    const Vector y = param_vector(p, "y", d, Vector::Zero(d));
    Vector dir_v = param_vector(p, "direction", d, Vector::Unit(d, 0));
    dir_v /= dir_v.norm();
    const std::vector<double> deltas = param_list(p, "deltas");
    const TimeGrid grid(0.0, t, default_steps(p, t, field.lambda()));

    const HolderReport rep =
        estimate_holder_exponent(field, x0, dir_v, deltas, t, y, n_paths, grid, make_run(cfg),
                                 param_bandwidth(p), p.value("crn", true));

    json out;
    out["x0"] = std::vector<double>(rep.x0.data(), rep.x0.data() + rep.x0.size());
    out["direction"] =
        std::vector<double>(rep.direction.data(), rep.direction.data() + rep.direction.size());
    out["deltas"] = rep.deltas;
    out["diffs"] = rep.diffs;
    out["stderrs"] = rep.stderrs;
    out["exponent"] = rep.fit.slope;
    out["ci_low"] = rep.fit.ci_low;
    out["ci_high"] = rep.fit.ci_high;
    write_text(dir / "holder.json", out.dump(2) + "\n");
}

void run_envelope(const ExperimentConfig& cfg, const fs::path& dir) {
    const CoefficientField& field = require_field(cfg);
    const json& p = *cfg.params;
    const int d = field.dim();
    const Vector x0 = param_vector(p, "x0", d, Vector::Zero(d));
    const std::vector<double> t_list = param_list(p, "t_list");
    const std::vector<double> r_list = param_list(p, "r_list");
    const std::size_t n_paths = require_count(p, "n_paths");
    const int steps_per_unit =
        p.value("n_steps_per_unit", static_cast<int>(std::ceil(field.lambda() * 1000.0)));
    const McRunSpec base_run = make_run(cfg);

    std::vector<EnvelopePoint> points;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t ti = 0; ti < t_list.size(); ++ti) {
        const double t = t_list[ti];
        if (!(t > 0.0)) throw ValidationError("config: t_list entries must be positive");
        McRunSpec run = base_run;
        run.stream_base = ti * (1ULL << 40);
        const TimeGrid grid(0.0, t, std::max(1, static_cast<int>(std::ceil(steps_per_unit * t))));
        const EndpointBatch batch = sample_endpoints(field, x0, grid, n_paths, run);
        double bw = param_bandwidth(p);
        if (bw <= 0.0) bw = scott_bandwidth(batch.endpoints);
        Matrix queries(d, static_cast<Eigen::Index>(r_list.size()));
        for (std::size_t ri = 0; ri < r_list.size(); ++ri)
            queries.col(static_cast<Eigen::Index>(ri)) = x0 + r_list[ri] * Vector::Unit(d, 0);
        const DensityEstimate est =
            weighted_density(batch.endpoints, batch.log_weights, queries, bw);
        for (std::size_t ri = 0; ri < r_list.size(); ++ri) {
            EnvelopePoint pt;
            pt.t = t;
            pt.r = r_list[ri];
            pt.value = est.values[static_cast<Eigen::Index>(ri)];
            pt.stderr_ = est.stderrs[static_cast<Eigen::Index>(ri)];
            points.push_back(pt);
            rows.push_back({fmt17(pt.t), fmt17(pt.r), fmt17(pt.value), fmt17(pt.stderr_),
                            std::to_string(n_paths), fmt17(bw)});
        }
    }
    write_csv(dir / "envelope_points.csv", {"t", "r", "value", "stderr", "n", "bandwidth"}, rows);

    const EnvelopeFitReport rep = fit_gaussian_envelope(points, d);
    const json out = {{"c_lower", rep.envelope.c_lower},
                      {"gamma_lower", rep.envelope.gamma_lower},
                      {"c_upper", rep.envelope.c_upper},
                      {"gamma_upper", rep.envelope.gamma_upper},
                      {"max_violation_sigma", rep.max_violation_sigma},
                      {"pass", rep.pass}};
    write_text(dir / "envelope.json", out.dump(2) + "\n");
}

void run_oracle(const ExperimentConfig& cfg, const fs::path& dir) {
    const json& p = *cfg.params;
    const std::string kind = p.value("kind", std::string{});
    if (kind == "kernel") {
        const CoefficientField& field = require_field(cfg);
        const int d = field.dim();
        const double t = require_double(p, "t");
        const Vector x = param_vector(p, "x", d, Vector::Zero(d));
        const Matrix queries = parse_queries(p, d);
        const ConstantCoefficientKernel k = ConstantCoefficientKernel::from_field(field);
        DensityEstimate est;
        est.queries = queries;
        est.values.resize(queries.cols());
        est.stderrs = Vector::Zero(queries.cols());
        est.kind = DensityEstimate::Kind::Oracle;
        for (Eigen::Index i = 0; i < queries.cols(); ++i)
            est.values[i] = gaussian_kernel(k, t, x, queries.col(i));
        write_csv(dir / "density.csv", density_header(d), density_rows(est));
        return;
    }
    if (kind == "cn") {
        const CoefficientField& field = require_field(cfg);
        if (field.dim() != 1) throw ValidationError("config: cn oracle needs d == 1");
        const double t = require_double(p, "t");
        Grid1D grid;
        grid.x_min = p.value("x_min", -8.0);
        grid.x_max = p.value("x_max", 8.0);
        grid.n_cells = p.value("n_cells", 1600);
        grid.dt = p.value("dt", 5e-3);
        const double x0 = p.value("x0", 0.0);
        const double width = p.value("init_width", 2.0 * grid.dx());
        const CnSolution sol = crank_nicolson_1d(field, x0, width, t, grid);
        const Matrix queries = parse_queries(p, 1);
        DensityEstimate est;
        est.queries = queries;
        est.values.resize(queries.cols());
        est.stderrs = Vector::Zero(queries.cols());
        est.kind = DensityEstimate::Kind::Oracle;
        for (Eigen::Index i = 0; i < queries.cols(); ++i)
            est.values[i] = sol.value_at(queries(0, i));
        write_csv(dir / "density.csv", density_header(1), density_rows(est));
        return;
    }
    if (kind == "survival") {
        const double delta = require_double(p, "delta");
        const std::vector<double> times = param_list(p, "times");
        std::vector<std::vector<std::string>> rows;
        for (double s : times)
            rows.push_back({fmt17(s), fmt17(coupling_survival_1d_bm(delta, s)), fmt17(0.0)});
        write_csv(dir / "survival.csv", {"s", "survival", "stderr"}, rows);
        return;
    }
    if (kind == "bridge") {
        const double t = require_double(p, "t");
        const double s = require_double(p, "s");
        Vector x(1), y(1);
        x[0] = p.value("x", 0.0);
        y[0] = require_double(p, "y");
        const BridgeMarginal m = brownian_bridge_marginal(t, s, x, y);
        const json out = {{"mean", m.mean[0]}, {"variance", m.variance}};
        write_text(dir / "bridge.json", out.dump(2) + "\n");
        return;
    }
    throw ValidationError("config: oracle kind must be kernel | cn | survival | bridge");
}

} // namespace

std::string run_experiment(const ExperimentConfig& cfg, const std::string& out_root) {
    const fs::path dir = fs::path(out_root) / config_hash_hex(cfg);
    fs::create_directories(dir);

    const auto start = std::chrono::steady_clock::now();
    json manifest = {{"config_hash", config_hash_hex(cfg)},
                     {"seed", cfg.seed},
                     {"version", kToolVersion},
                     {"status", "ok"}};
    auto finish_manifest = [&](const std::string& status, const std::string& error) {
        const auto stop = std::chrono::steady_clock::now();
        manifest["status"] = status;
        if (!error.empty()) manifest["error"] = error;
        manifest["wall_time_s"] =
            std::chrono::duration_cast<std::chrono::duration<double>>(stop - start).count();
        write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    };

    try {
        if (cfg.experiment == "validate") run_validate(cfg, dir);
        else if (cfg.experiment == "simulate") run_simulate(cfg, dir);
        else if (cfg.experiment == "estimate") run_estimate(cfg, dir);
        else if (cfg.experiment == "couple") run_couple(cfg, dir);
        else if (cfg.experiment == "holder") run_holder(cfg, dir);
        else if (cfg.experiment == "envelope") run_envelope(cfg, dir);
        else if (cfg.experiment == "oracle") run_oracle(cfg, dir);
        else throw ValidationError("config: unknown experiment '" + cfg.experiment + "'");
    } catch (const ValidationError& e) {
        finish_manifest("config_error", e.what());
        throw;
    } catch (const std::exception& e) {
        finish_manifest("numerical_error", e.what());
        throw;
    }
    finish_manifest("ok", "");
    return dir.string();
}

} // namespace parakern
