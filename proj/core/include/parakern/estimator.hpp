#ifndef PARAKERN_ESTIMATOR_HPP
#define PARAKERN_ESTIMATOR_HPP

#include "parakern/coefficients.hpp"
#include "parakern/sde.hpp"
#include "parakern/stats.hpp"
#include "parakern/time_grid.hpp"
#include "parakern/types.hpp"

#include <string>
#include <vector>

namespace parakern {

struct DensityEstimate {
    enum class Kind { Unweighted, Weighted, Oracle };

    Matrix queries;   // d x m
    Vector values;    // m
    Vector stderrs;   // m
    double bandwidth = 0.0;
    std::size_t n_paths = 0;
    Kind kind = Kind::Unweighted;
};

const char* to_string(DensityEstimate::Kind kind);

// Scott-type rule h = 1.06 sigma_hat n^{-1/(d+4)} with sigma_hat the average
// per-coordinate sample deviation
double scott_bandwidth(const Matrix& endpoints);

// isotropic Gaussian product kernel value at squared distance r2
double gaussian_kde_kernel(double r2, double bandwidth, int d);

// unweighted kernel density estimate of the endpoint law
DensityEstimate estimate_px_density(const Matrix& endpoints, const Matrix& queries,
                                    double bandwidth);

// weighted KDE realizing p_hat(0,x;t,y) = (1/n) sum E_i K_h(X_i - y)
DensityEstimate weighted_density(const Matrix& endpoints, const Vector& log_weights,
                                 const Matrix& queries, double bandwidth);

// end-to-end estimate of the fundamental solution at t from x
DensityEstimate estimate_fundamental(const CoefficientField& field, const Vector& x, double t,
                                     const Matrix& queries, std::size_t n_paths,
                                     const TimeGrid& grid, const McRunSpec& run,
                                     double bandwidth);

// ratio estimator of E^{X_t = y}[E(0,t;X)] with a delta-method standard error;
// requires at least 10 effective local samples at y
MeanStderr pinned_expectation(const Matrix& endpoints, const Vector& log_weights,
                              const Vector& y, double bandwidth);

// histogram fallback for mass checks (d == 1)
std::vector<std::pair<double, double>> histogram_density(const Matrix& endpoints, double lo,
                                                         double hi, double bin_width);

// trapezoid mass of a weighted density over [lo, hi] (d == 1)
double density_mass(const Matrix& endpoints, const Vector& log_weights, double lo, double hi,
                    int n_quad, double bandwidth);

// ---- Gaussian envelope fit ---------------------------------------------------

struct GaussianEnvelope {
    double c_lower = 0.0;
    double gamma_lower = 0.0;
    double c_upper = 0.0;
    double gamma_upper = 0.0;

    double lower(double t, double r, int d) const;
    double upper(double t, double r, int d) const;
};

struct EnvelopePoint {
    double t = 0.0;
    double r = 0.0;       // |x - y|
    double value = 0.0;   // estimated density
    double stderr_ = 0.0;
};

struct EnvelopeFitReport {
    GaussianEnvelope envelope;
    double max_violation_sigma = 0.0;  // violations measured in stderr units
    bool pass = false;                 // every point within 3 stderr of the band
};

EnvelopeFitReport fit_gaussian_envelope(const std::vector<EnvelopePoint>& points, int d);

// ---- Hoelder exponent experiment ----------------------------------------------

struct HolderReport {
    Vector x0;
    Vector direction;
    std::vector<double> deltas;
    std::vector<double> diffs;     // |p_hat(x0) - p_hat(x0 + delta dir)| at y
    std::vector<double> stderrs;
    LineFit fit;                   // slope of log diff against log delta
};

HolderReport estimate_holder_exponent(const CoefficientField& field, const Vector& x0,
                                      const Vector& direction,
                                      const std::vector<double>& deltas, double t,
                                      const Vector& y, std::size_t n_paths,
                                      const TimeGrid& grid, const McRunSpec& run,
                                      double bandwidth, bool common_random_numbers = true);

// ---- self-consistency checks ---------------------------------------------------

struct CkCheckRow {
    double y = 0.0;
    double direct = 0.0;
    double direct_stderr = 0.0;
    double composed = 0.0;
    double composed_stderr = 0.0;
    double residual_sigma = 0.0;
};

struct CkCheckReport {
    double max_residual_sigma = 0.0;
    std::vector<CkCheckRow> rows;
};

// compares p_hat(0,x;t,y) with the quadrature of p_hat(0,x;s,xi) p_hat(s,xi;t,y)
// over a xi-grid (d == 1)
CkCheckReport chapman_kolmogorov_check(const CoefficientField& field, double x, double s,
                                       double t, const std::vector<double>& queries,
                                       std::size_t n_paths, int n_steps_per_leg,
                                       const McRunSpec& run, int n_xi = 41);

struct MomentBoundRow {
    double q = 0.0;
    double t = 0.0;
    double log_moment = 0.0;   // log E_hat[E^q]
    double stderr_log = 0.0;
    double bound = 0.0;        // C_hat (1 + q^2) t
};

struct MomentBoundReport {
    double c_hat = 0.0;  // minimal feasible constant
    std::vector<MomentBoundRow> rows;
};

// verifies log E_hat[E(0,t)^q] <= C (1+q^2) t + 2 stderr across the (q,t) grid
MomentBoundReport moment_bound_check(const CoefficientField& field,
                                     const std::vector<double>& q_list,
                                     const std::vector<double>& t_list, std::size_t n_paths,
                                     const Vector& x0, const McRunSpec& run,
                                     int n_steps_per_unit_time = 1000);

// KDE bias budget 1/2 h^2 |d2 p| from a reference second derivative
double kde_bias_budget(double bandwidth, double second_derivative);

} // namespace parakern

#endif
