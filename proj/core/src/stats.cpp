#include "parakern/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace parakern {

MeanStderr mean_stderr(std::span<const double> values) {
    MeanStderr out;
    out.n = values.size();
    if (out.n == 0) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(out.n);
    if (out.n < 2) return out;
    double ss = 0.0;
    for (double v : values) {
        const double d = v - out.mean;
        ss += d * d;
    }
    const double var = ss / static_cast<double>(out.n - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(out.n));
    return out;
}

MeanStderr exp_mean_stderr(std::span<const double> log_values) {
    MeanStderr out;
    out.n = log_values.size();
    if (out.n == 0) return out;
    double shift = -std::numeric_limits<double>::infinity();
    for (double lv : log_values) shift = std::max(shift, lv);
    if (!std::isfinite(shift)) {  // all -inf: mean of zeros
        out.mean = 0.0;
        return out;
    }
    double sum = 0.0;
    for (double lv : log_values) sum += std::exp(lv - shift);
    const double m = sum / static_cast<double>(out.n);
    double ss = 0.0;
    for (double lv : log_values) {
        const double d = std::exp(lv - shift) - m;
        ss += d * d;
    }
    const double scale = std::exp(shift);
    out.mean = m * scale;
    if (out.n >= 2) {
        const double var = ss / static_cast<double>(out.n - 1);
        out.stderr_ = std::sqrt(var / static_cast<double>(out.n)) * scale;
    }
    return out;
}

namespace {

LineFit finish_fit(double sw, double swx, double swy, double swxx, double swxy,
                   std::span<const double> x, std::span<const double> y,
                   const double* w, std::size_t n, bool have_point_variances) {
    const double det = sw * swxx - swx * swx;
    if (det <= 0.0 || n < 2)
        throw std::invalid_argument("fit_line: need at least 2 distinct x values");
    LineFit fit;
    fit.slope = (sw * swxy - swx * swy) / det;
    fit.intercept = (swxx * swy - swx * swxy) / det;

    if (have_point_variances) {
        // variance of the WLS slope from the supplied variances
        fit.slope_stderr = std::sqrt(sw / det);
    } else if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - fit.intercept - fit.slope * x[i];
            rss += (w ? w[i] : 1.0) * r * r;
        }
        const double s2 = rss / static_cast<double>(n - 2);
        fit.slope_stderr = std::sqrt(s2 * sw / det);
    }
    fit.ci_low = fit.slope - 1.959963984540054 * fit.slope_stderr;
    fit.ci_high = fit.slope + 1.959963984540054 * fit.slope_stderr;
    return fit;
}

} // namespace

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_line: size mismatch");
    const std::size_t n = x.size();
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += 1.0;
        swx += x[i];
        swy += y[i];
        swxx += x[i] * x[i];
        swxy += x[i] * y[i];
    }
    return finish_fit(sw, swx, swy, swxx, swxy, x, y, nullptr, n, false);
}

LineFit fit_line_weighted(std::span<const double> x, std::span<const double> y,
                          std::span<const double> y_variance) {
    if (x.size() != y.size() || x.size() != y_variance.size())
        throw std::invalid_argument("fit_line_weighted: size mismatch");
    const std::size_t n = x.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(y_variance[i] > 0.0))
            throw std::invalid_argument("fit_line_weighted: nonpositive variance");
        w[i] = 1.0 / y_variance[i];
    }
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
        swxx += w[i] * x[i] * x[i];
        swxy += w[i] * x[i] * y[i];
    }
    return finish_fit(sw, swx, swy, swxx, swxy, x, y, w.data(), n, true);
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    std::size_t i = 0;
    while (i < sample.size()) {
        std::size_t j = i;
        while (j < sample.size() && sample[j] == sample[i]) ++j;
        const double f = cdf(sample[i]);
        d = std::max(d, std::abs(static_cast<double>(j) / n - f));
        d = std::max(d, std::abs(static_cast<double>(i) / n - f));
        i = j;
    }
    return d;
}

} // namespace parakern
