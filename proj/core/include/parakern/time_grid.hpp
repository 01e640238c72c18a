#ifndef PARAKERN_TIME_GRID_HPP
#define PARAKERN_TIME_GRID_HPP

#include "parakern/types.hpp"

#include <cmath>

namespace parakern {

// uniform time discretization of [t_start, t_end] into n_steps steps
struct TimeGrid {
    double t_start = 0.0;
    double t_end = 1.0;
    int n_steps = 1000;

    TimeGrid() = default;
    TimeGrid(double t0, double t1, int steps) : t_start(t0), t_end(t1), n_steps(steps) {
        if (!(t_end > t_start)) throw ValidationError("TimeGrid: t_end must exceed t_start");
        if (n_steps < 1) throw ValidationError("TimeGrid: n_steps must be positive");
    }

    double h() const { return (t_end - t_start) / n_steps; }
    double time_at(int k) const { return t_start + k * h(); }

    // default step rule: lambda * h <= 1e-3 * horizon, i.e. n >= 1000 * lambda
    static TimeGrid with_default_step(double t0, double t1, double lambda) {
        const int steps = std::max(1, static_cast<int>(std::ceil(lambda * 1000.0)));
        return TimeGrid(t0, t1, steps);
    }
};

} // namespace parakern

#endif
