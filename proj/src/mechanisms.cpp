#include "dpsynth/mechanisms.hpp"

#include <cmath>
#include <limits>

#include "dpsynth/errors.hpp"
#include "dpsynth/schedule.hpp"

namespace dpsynth {

void GaussianNoiseSpec::validate() const {
    if (sensitivity < 0.0 || sigma < 0.0)
        throw ValidationError("Gaussian noise spec requires nonnegative sensitivity and sigma");
}

std::vector<double> gaussian_mechanism(const std::vector<double>& v,
                                       const GaussianNoiseSpec& spec,
                                       SeededRng& rng) {
    spec.validate();
    const double std_dev = spec.sensitivity * spec.sigma;
    std::vector<double> out(v);
    if (std_dev == 0.0) return out;
    for (double& x : out) x += std_dev * rng.normal();
    return out;
}

std::vector<double> laplace_counts(const std::vector<long long>& counts,
                                   double epsilon, SeededRng& rng) {
    if (!(epsilon > 0.0))
        throw ValidationError("laplace_counts requires epsilon > 0");
    std::vector<double> out(counts.size());
    if (std::isinf(epsilon)) {
        for (std::size_t i = 0; i < counts.size(); ++i)
            out[i] = static_cast<double>(counts[i]);
        return out;
    }
    const double scale = 1.0 / epsilon;
    for (std::size_t i = 0; i < counts.size(); ++i)
        out[i] = static_cast<double>(counts[i]) + rng.laplace(scale);
    return out;
}

std::size_t report_noisy_max(const std::vector<long long>& counts,
                             double epsilon, SeededRng& rng) {
    if (counts.empty())
        throw ValidationError("report_noisy_max over an empty vector");
    if (!(epsilon > 0.0))
        throw ValidationError("report_noisy_max requires epsilon > 0");

    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    const bool noiseless = std::isinf(epsilon);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const double score = static_cast<double>(counts[i]) +
                             (noiseless ? 0.0 : rng.laplace(1.0 / epsilon));
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return best;
}

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

void clip_l2_inplace(std::vector<double>& g, double clip_bound) {
    if (!(clip_bound > 0.0))
        throw ValidationError("clip bound must be positive");
    const double norm = l2_norm(g);
    if (norm <= clip_bound) return;
    const double scale = clip_bound / norm;
    for (double& x : g) x *= scale;
}

std::vector<double> clip_l2(const std::vector<double>& g, double clip_bound) {
    std::vector<double> out(g);
    clip_l2_inplace(out, clip_bound);
    return out;
}

std::vector<double> dppromise_reconstruct(const std::vector<double>& x_t,
                                          const std::vector<double>& e,
                                          std::size_t t,
                                          const NoiseSchedule& sched) {
    if (x_t.size() != e.size())
        throw ValidationError("noise vector size must match the sample");
    const double ab = sched.alphabar_at(t);
    if (ab <= 0.0)
        throw SingularityError("alphabar vanishes at this step; reconstruction undefined");
    const double inv_sqrt_ab = 1.0 / std::sqrt(ab);
    const double noise_scale = std::sqrt(1.0 - ab);
    std::vector<double> x0(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i)
        x0[i] = (x_t[i] - e[i] * noise_scale) * inv_sqrt_ab;
    return x0;
}

} // namespace dpsynth
