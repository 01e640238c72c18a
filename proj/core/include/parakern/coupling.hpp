#ifndef PARAKERN_COUPLING_HPP
#define PARAKERN_COUPLING_HPP

#include "parakern/coefficients.hpp"
#include "parakern/sde.hpp"
#include "parakern/stats.hpp"
#include "parakern/time_grid.hpp"
#include "parakern/types.hpp"

#include <limits>
#include <vector>

namespace parakern {

// Householder reflection I - 2 u u^T / |u|^2 with u = sigma_z^{-1} xi;
// orthogonal, symmetric, and maps u to -u
Matrix reflection_matrix(const Matrix& sigma_z, const Vector& xi);

inline double coupling_threshold(double h, double lambda) {
    return std::sqrt(h * lambda) / 4.0;
}

struct CoupledPaths {
    Trajectory x;
    Trajectory z;
    bool coupled = false;
    double tau = std::numeric_limits<double>::infinity();
    int tau_step = -1;  // step index whose update triggered coupling
};

// Reflection-coupled pair: X driven by dB, Z by H dB until the coupling time,
// then glued (Z := X).  Coupling fires when |X - Z| drops below the threshold,
// when the reflected direction degenerates, or when a per-step first-passage
// (Brownian bridge) test on the separation detects a hit inside the step; tau
// is placed uniformly inside the detecting step.
CoupledPaths simulate_coupled_pair(const CoefficientField& field, const Vector& x,
                                   const Vector& z, const TimeGrid& grid, RngStream& rng);

// streaming variant: only the coupling time (capped at the horizon)
double sample_coupling_time(const CoefficientField& field, const Vector& x, const Vector& z,
                            const TimeGrid& grid, RngStream& rng);

struct SurvivalPoint {
    double s = 0.0;
    double survival = 0.0;
    double stderr_ = 0.0;
};

struct CouplingStats {
    double delta = 0.0;
    double horizon = 0.0;
    std::size_t n_pairs = 0;
    MeanStderr e_t_tau;
    std::vector<SurvivalPoint> survival;
    std::vector<double> tau_samples;  // tau ^ horizon per pair
};

CouplingStats coupling_time_stats(const CoefficientField& field, const Vector& x,
                                  const Vector& z, double horizon, std::size_t n_pairs,
                                  const TimeGrid& grid, const McRunSpec& run,
                                  const std::vector<double>& survival_times = {});

struct CouplingExponentRow {
    double delta = 0.0;
    double t = 0.0;
    double e_t_tau = 0.0;
    double stderr_ = 0.0;
    std::size_t n_pairs = 0;
};

struct CouplingExponentReport {
    LineFit fit;  // slope of log E[t ^ tau] against log delta
    std::vector<CouplingExponentRow> rows;
};

CouplingExponentReport estimate_coupling_exponent(const CoefficientField& field,
                                                  const Vector& x0, const Vector& direction,
                                                  const std::vector<double>& deltas,
                                                  double horizon, std::size_t n_pairs,
                                                  const TimeGrid& grid, const McRunSpec& run);

} // namespace parakern

#endif
