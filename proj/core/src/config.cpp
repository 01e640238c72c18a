#include "parakern/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <set>

namespace parakern {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ValidationError("config: unknown key '" + key + "' in " + where);
    }
}

Matrix parse_matrix(const json& v, int d, const std::string& where) {
    Matrix m(d, d);
    if (v.is_number()) {
        if (d != 1) throw ValidationError("config: " + where + " must be a " +
                                          std::to_string(d) + "x" + std::to_string(d) + " matrix");
        m(0, 0) = v.get<double>();
        return m;
    }
    if (!v.is_array() || static_cast<int>(v.size()) != d)
        throw ValidationError("config: " + where + " must be a square matrix of size " +
                              std::to_string(d));
    for (int i = 0; i < d; ++i) {
        const json& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != d)
            throw ValidationError("config: " + where + " row " + std::to_string(i) +
                                  " has wrong length");
        for (int j = 0; j < d; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

Vector parse_vector(const json& v, int d, const std::string& where) {
    Vector out(d);
    if (v.is_number()) {
        if (d != 1)
            throw ValidationError("config: " + where + " must be a vector of length " +
                                  std::to_string(d));
        out[0] = v.get<double>();
        return out;
    }
    if (!v.is_array() || static_cast<int>(v.size()) != d)
        throw ValidationError("config: " + where + " must be a vector of length " +
                              std::to_string(d));
    for (int i = 0; i < d; ++i) out[i] = v[static_cast<std::size_t>(i)].get<double>();
    return out;
}

CoefficientField build_field(const json& fobj) {
    if (!fobj.is_object()) throw ValidationError("config: 'field' must be an object");
    if (fobj.contains("preset")) {
        reject_unknown_keys(fobj, {"preset", "d", "a0", "b0", "c0"}, "field");
        const std::string preset = fobj.at("preset").get<std::string>();
        const int d = fobj.value("d", 1);
        if (d < 1) throw ValidationError("config: field.d must be positive");
        if (preset == "const") {
            const Matrix a0 = fobj.contains("a0") ? parse_matrix(fobj.at("a0"), d, "field.a0")
                                                  : Matrix::Identity(d, d);
            const Vector b0 = fobj.contains("b0") ? parse_vector(fobj.at("b0"), d, "field.b0")
                                                  : Vector::Zero(d);
            const double c0 = fobj.value("c0", 0.0);
            return make_constant_field(a0, b0, c0);
        }
        if (preset == "sin_a") {
            if (fobj.contains("a0") || fobj.contains("b0") || fobj.contains("c0"))
                throw ValidationError("config: preset sin_a takes no coefficient parameters");
            return make_sin_a_field(d);
        }
        if (preset == "disc_bc") {
            if (fobj.contains("a0") || fobj.contains("b0") || fobj.contains("c0"))
                throw ValidationError("config: preset disc_bc takes no coefficient parameters");
            return make_disc_bc_field(d);
        }
        throw ValidationError("config: unknown preset '" + preset + "'");
    }
    if (fobj.contains("expressions")) {
        reject_unknown_keys(fobj, {"expressions"}, "field");
        const json& e = fobj.at("expressions");
        reject_unknown_keys(e, {"d", "lambda", "a", "b", "c", "b_sup", "c_sup"},
                            "field.expressions");
        ExpressionFieldSpec spec;
        spec.d = e.value("d", 1);
        spec.lambda = e.value("lambda", 1.0);
        spec.c = e.value("c", std::string("0"));
        spec.b_sup = e.value("b_sup", 0.0);
        spec.c_sup = e.value("c_sup", 0.0);
        if (!e.contains("a")) throw ValidationError("config: field.expressions.a required");
        const json& a = e.at("a");
        if (a.is_string()) {
            spec.a = {{a.get<std::string>()}};
            if (spec.d != 1)
                throw ValidationError("config: scalar expression a needs d == 1");
        } else {
            for (const auto& row : a) {
                std::vector<std::string> r;
                for (const auto& cell : row) r.push_back(cell.get<std::string>());
                spec.a.push_back(std::move(r));
            }
        }
        if (e.contains("b")) {
            const json& b = e.at("b");
            if (b.is_string()) {
                spec.b = {b.get<std::string>()};
            } else {
                for (const auto& cell : b) spec.b.push_back(cell.get<std::string>());
            }
        } else {
            spec.b.assign(static_cast<std::size_t>(spec.d), "0");
        }
        return make_expression_field(spec);
    }
    throw ValidationError("config: field needs either 'preset' or 'expressions'");
}

const std::set<std::string>& allowed_params(const std::string& experiment) {
    static const std::map<std::string, std::set<std::string>> table = {
        {"validate",
         {"grid_t0", "grid_t1", "grid_nt", "grid_half_width", "grid_nx", "modulus_radius",
          "modulus_pairs", "modulus_t_samples", "modulus_t_max", "a3_theta", "a3_m",
          "a3_half_width", "a3_nodes", "a3_fd_step"}},
        {"simulate", {"x0", "t", "n_paths", "n_steps", "dump_trajectories"}},
        {"estimate", {"x0", "t", "queries", "n_paths", "n_steps", "bandwidth"}},
        {"couple",
         {"x0", "t", "n_pairs", "n_steps", "delta", "deltas", "direction", "survival_times"}},
        {"holder",
         {"x0", "direction", "deltas", "t", "y", "n_paths", "n_steps", "bandwidth", "crn"}},
        {"envelope", {"x0", "t_list", "r_list", "n_paths", "n_steps_per_unit", "bandwidth"}},
        {"oracle",
         {"kind", "t", "x", "queries", "x0", "x_min", "x_max", "n_cells", "dt", "init_width",
          "delta", "times", "s"}},
    };
    const auto it = table.find(experiment);
    if (it == table.end())
        throw ValidationError("config: unknown experiment '" + experiment + "'");
    return it->second;
}

} // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

std::string config_hash_hex(const ExperimentConfig& config) {
    const std::uint64_t h = fnv1a64(config.canonical);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

ExperimentConfig load_config(const std::string& json_text,
                             const std::optional<std::uint64_t>& seed_override,
                             const std::optional<int>& workers_override,
                             const std::string& experiment_from_cli) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config: JSON parse error: ") + e.what());
    }
    if (!root.is_object()) throw ValidationError("config: top level must be an object");

    reject_unknown_keys(root,
                        {"version", "experiment", "seed", "workers", "chunk_size", "field",
                         "params", "output"},
                        "top level");

    ExperimentConfig cfg;
    if (!root.contains("version")) throw ValidationError("config: 'version' is required");
    cfg.version = root.at("version").get<int>();
    if (cfg.version != kConfigVersion)
        throw ValidationError("config: version " + std::to_string(cfg.version) +
                              " not supported (expected " + std::to_string(kConfigVersion) + ")");

    cfg.experiment = root.value("experiment", experiment_from_cli);
    if (!experiment_from_cli.empty() && cfg.experiment != experiment_from_cli)
        throw ValidationError("config: experiment '" + cfg.experiment +
                              "' does not match subcommand '" + experiment_from_cli + "'");
    if (cfg.experiment.empty())
        throw ValidationError("config: 'experiment' missing and no subcommand given");

    cfg.seed = root.value("seed", 0ULL);
    if (seed_override) cfg.seed = *seed_override;
    cfg.workers = root.value("workers", 1);
    if (workers_override) cfg.workers = *workers_override;
    if (cfg.workers < 1) throw ValidationError("config: workers must be >= 1");
    cfg.chunk_size = root.value("chunk_size", std::size_t{4096});
    if (cfg.chunk_size == 0) throw ValidationError("config: chunk_size must be positive");
    cfg.output = root.value("output", std::string("out"));

    if (root.contains("field")) cfg.field = build_field(root.at("field"));

    cfg.params_storage = std::make_shared<json>(root.value("params", json::object()));
    cfg.params = cfg.params_storage.get();
    reject_unknown_keys(*cfg.params, allowed_params(cfg.experiment),
                        "params for '" + cfg.experiment + "'");

    // canonical form with overrides applied (nlohmann orders object keys)
    json canon = root;
    canon["seed"] = cfg.seed;
    canon["workers"] = cfg.workers;
    canon["experiment"] = cfg.experiment;
    cfg.canonical = canon.dump();
    return cfg;
}

} // namespace parakern
