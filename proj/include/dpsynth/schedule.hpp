#pragma once

#include <cstddef>
#include <vector>

namespace dpsynth {

/// Forward-diffusion variance schedule. beta[t-1] is the step-t variance,
/// alphabar[t-1] the running product of (1 - beta_s) up to t. alphabar is
/// strictly decreasing, starts near 1 and ends near 0.
struct NoiseSchedule {
    std::size_t steps = 0;
    std::vector<double> beta;     // length steps, values in (0,1)
    std::vector<double> alphabar; // length steps

    double alphabar_at(std::size_t t) const; // 1-indexed, t in [1, steps]
    double beta_at(std::size_t t) const;

    void validate() const;

    /// Linear beta ramp. The default end value 20/T keeps the terminal
    /// alphabar pinned near exp(-10) regardless of the step count.
    static NoiseSchedule linear(std::size_t steps, double beta_start = 1e-4,
                                double beta_end = 0.0);
};

/// Closed-form forward sample sqrt(abar_t) x0 + sqrt(1 - abar_t) e.
std::vector<double> diffuse_forward(const std::vector<double>& x0, std::size_t t,
                                    const std::vector<double>& e,
                                    const NoiseSchedule& sched);

} // namespace dpsynth
