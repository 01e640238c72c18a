#ifndef PARAKERN_STATS_HPP
#define PARAKERN_STATS_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace parakern {

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

MeanStderr mean_stderr(std::span<const double> values);

// mean of exp(log_values) computed with max-shift stabilization;
// stderr is for the (unshifted) mean
MeanStderr exp_mean_stderr(std::span<const double> log_values);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double ci_low = 0.0;   // 95% interval for the slope
    double ci_high = 0.0;
};

// ordinary least squares y ~ intercept + slope * x
LineFit fit_line(std::span<const double> x, std::span<const double> y);

// weighted least squares with per-point variances of y
LineFit fit_line_weighted(std::span<const double> x, std::span<const double> y,
                          std::span<const double> y_variance);

// two-sided Kolmogorov-Smirnov distance between a sample and a continuous
// CDF; ties in the sample are handled by comparing at distinct values only
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

} // namespace parakern

#endif
