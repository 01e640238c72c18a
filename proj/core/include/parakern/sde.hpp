#ifndef PARAKERN_SDE_HPP
#define PARAKERN_SDE_HPP

#include "parakern/coefficients.hpp"
#include "parakern/rng.hpp"
#include "parakern/stats.hpp"
#include "parakern/time_grid.hpp"
#include "parakern/types.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace parakern {

// one discretized path of dX = sigma(t,X) dB together with its driving noise
struct Trajectory {
    TimeGrid grid;
    Matrix states;      // d x (n_steps + 1)
    Matrix increments;  // d x n_steps

    int dim() const { return static_cast<int>(states.rows()); }
};

// running decomposition of log E(s,t;X):
//   log_stoch = sum <b_sigma, dB>, log_quad = -1/2 sum |b_sigma|^2 h,
//   log_pot = sum c h
struct WeightAccumulator {
    double log_stoch = 0.0;
    double log_quad = 0.0;
    double log_pot = 0.0;

    double total() const { return log_stoch + log_quad + log_pot; }
};

// shared knobs for Monte Carlo runs
struct McRunSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_base = 0;  // paths use stream_base + path_index
    int workers = 1;
    std::size_t chunk_size = 4096;
};

// one Euler-Maruyama update X + sigma(t, X) dB (exposed for unit tests)
Vector euler_step(const CoefficientField& field, double t, const Vector& x, const Vector& db);

std::vector<Trajectory> simulate_paths(const CoefficientField& field, const Vector& x0,
                                       const TimeGrid& grid, int n_paths, const McRunSpec& run);

WeightAccumulator accumulate_weight(const Trajectory& traj, const CoefficientField& field);

// partial weights over [0, tau_step) and [tau_step, n_steps); their totals sum
// to the full log-weight
std::pair<WeightAccumulator, WeightAccumulator> weight_split(const Trajectory& traj,
                                                             const CoefficientField& field,
                                                             int tau_step);

// endpoint-only sampling for estimators: terminal states and log-weights
struct EndpointBatch {
    Matrix endpoints;     // d x n_paths
    Vector log_weights;   // n_paths

    std::size_t size() const { return static_cast<std::size_t>(endpoints.cols()); }
};

EndpointBatch sample_endpoints(const CoefficientField& field, const Vector& x0,
                               const TimeGrid& grid, std::size_t n_paths, const McRunSpec& run);

// common-random-numbers variant: one batch per start, path i of every batch
// driven by the same Brownian increments
std::vector<EndpointBatch> sample_endpoints_crn(const CoefficientField& field,
                                                const std::vector<Vector>& starts,
                                                const TimeGrid& grid, std::size_t n_paths,
                                                const McRunSpec& run);

// Feynman-Kac estimate of u(t, x0) = E[f(X_t) E(0,t;X)]
MeanStderr feynman_kac_solve(const CoefficientField& field,
                             const std::function<double(const Vector&)>& f, const Vector& x0,
                             const TimeGrid& grid, std::size_t n_paths, const McRunSpec& run);

// Pinned diffusion for constant-coefficient fields: Euler-Maruyama with the
// h-transform drift a grad log p^X = (y - X)/(t_end - s); the final step moves
// deterministically to y once t_end - s < 2h
Trajectory simulate_bridge(const CoefficientField& field, const Vector& x, const Vector& y,
                           const TimeGrid& grid, RngStream& rng);

} // namespace parakern

#endif
