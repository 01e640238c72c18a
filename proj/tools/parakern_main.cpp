// Experiment runner: every estimator, coupling experiment and oracle in the
// library is exposed as a subcommand driven by a versioned JSON config.
// Identical (config, seed, workers, chunking) reruns write identical bytes.

#include "parakern/config.hpp"
#include "parakern/runner.hpp"
#include "parakern/types.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parakern::ValidationError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"parakern: Monte Carlo estimation of fundamental solutions to "
                 "non-divergence-form parabolic equations"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed_override;
    std::optional<int> workers_override;

    const std::vector<std::string> experiments = {"validate", "simulate", "estimate",
                                                  "couple",   "holder",   "envelope", "oracle"};
    for (const auto& name : experiments) {
        CLI::App* sub = app.add_subcommand(name, name + " experiment");
        sub->add_option("--config", config_path, "JSON experiment config")->required();
        sub->add_option("--seed", [&seed_override](const CLI::results_t& res) {
            seed_override = std::stoull(res[0]);
            return true;
        }, "override the config seed");
        sub->add_option("--workers", [&workers_override](const CLI::results_t& res) {
            workers_override = std::stoi(res[0]);
            return true;
        }, "override the config worker count");
        sub->add_option("--out-dir", out_dir, "output root directory");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string experiment = app.get_subcommands().front()->get_name();

    try {
        const parakern::ExperimentConfig cfg = parakern::load_config(
            read_file(config_path), seed_override, workers_override, experiment);
        const std::string dir = parakern::run_experiment(cfg, out_dir);
        std::cout << dir << "\n";
        return 0;
    } catch (const parakern::ValidationError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    }
}
