#ifndef PARAKERN_CONFIG_HPP
#define PARAKERN_CONFIG_HPP

#include "parakern/coefficients.hpp"
#include "parakern/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace parakern {

inline constexpr int kConfigVersion = 1;
inline constexpr const char* kToolVersion = "parakern-0.1.0";

// Parsed and validated experiment description.  Experiment-specific numeric
// parameters stay in `params` (already schema-checked); the field is built
// eagerly so bad coefficient specs fail at load time.
struct ExperimentConfig {
    int version = kConfigVersion;
    std::string experiment;  // validate | simulate | estimate | couple | holder | envelope | oracle
    std::uint64_t seed = 0;
    int workers = 1;
    std::size_t chunk_size = 4096;
    std::string output = "out";
    std::optional<CoefficientField> field;
    nlohmann::json* params = nullptr;  // owned via params_storage
    std::shared_ptr<nlohmann::json> params_storage;
    std::string canonical;  // normalized dump used for hashing
};

// parses, applies overrides, validates keys per experiment, builds the field
ExperimentConfig load_config(const std::string& json_text,
                             const std::optional<std::uint64_t>& seed_override,
                             const std::optional<int>& workers_override,
                             const std::string& experiment_from_cli);

std::uint64_t fnv1a64(const std::string& bytes);
std::string config_hash_hex(const ExperimentConfig& config);

} // namespace parakern

#endif
