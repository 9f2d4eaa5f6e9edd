#include "dpsynth/schedule.hpp"

#include <cmath>

#include "dpsynth/errors.hpp"

namespace dpsynth {

double NoiseSchedule::alphabar_at(std::size_t t) const {
    if (t < 1 || t > steps) throw ValidationError("schedule step out of range");
    return alphabar[t - 1];
}

double NoiseSchedule::beta_at(std::size_t t) const {
    if (t < 1 || t > steps) throw ValidationError("schedule step out of range");
    return beta[t - 1];
}

void NoiseSchedule::validate() const {
    if (steps == 0 || beta.size() != steps || alphabar.size() != steps)
        throw ValidationError("schedule arrays must match the step count");
    double prev = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        if (beta[i] <= 0.0 || beta[i] >= 1.0)
            throw ValidationError("beta values must lie in (0,1)");
        if (alphabar[i] >= prev)
            throw ValidationError("alphabar must be strictly decreasing");
        prev = alphabar[i];
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start,
                                    double beta_end) {
    if (steps == 0) throw ValidationError("schedule needs at least one step");
    // The 20/T ramp pins the terminal alphabar near exp(-10); the cap keeps
    // the per-step amplification 1/sqrt(1-beta) sane for short schedules.
    if (beta_end <= 0.0) beta_end = std::min(0.35, 20.0 / static_cast<double>(steps));
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alphabar.resize(steps);
    double prod = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0
                                       : static_cast<double>(i) / static_cast<double>(steps - 1);
        s.beta[i] = beta_start + frac * (beta_end - beta_start);
        prod *= 1.0 - s.beta[i];
        s.alphabar[i] = prod;
    }
    s.validate();
    return s;
}

std::vector<double> diffuse_forward(const std::vector<double>& x0, std::size_t t,
                                    const std::vector<double>& e,
                                    const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps)
        throw ValidationError("diffusion step out of range");
    if (x0.size() != e.size())
        throw ValidationError("noise vector size must match the sample");
    const double ab = sched.alphabar_at(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * e[i];
    return out;
}

} // namespace dpsynth
