#ifndef PARAKERN_RUNNER_HPP
#define PARAKERN_RUNNER_HPP

#include "parakern/config.hpp"

#include <string>

namespace parakern {

// Executes the configured experiment and writes its outputs (plus a manifest)
// under <out_root>/<config-hash>/.  The manifest is written even when the run
// fails; errors then propagate to the caller.  Returns the output directory.
std::string run_experiment(const ExperimentConfig& config, const std::string& out_root);

// 17-significant-digit float formatting shared by every CSV writer
std::string fmt17(double v);

} // namespace parakern

#endif
