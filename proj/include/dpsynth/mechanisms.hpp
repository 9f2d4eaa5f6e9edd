#pragma once

#include <cstddef>
#include <vector>

#include "dpsynth/rng.hpp"

namespace dpsynth {

struct NoiseSchedule; // diffusion.hpp

/// Sensitivity and noise multiplier of one Gaussian release. The effective
/// per-coordinate noise std is sensitivity * sigma.
struct GaussianNoiseSpec {
    double sensitivity = 0.0;
    double sigma = 0.0;

    void validate() const;
};

/// v + N(0, (sensitivity*sigma)^2 I).
std::vector<double> gaussian_mechanism(const std::vector<double>& v,
                                       const GaussianNoiseSpec& spec,
                                       SeededRng& rng);

/// Adds i.i.d. Laplace(1/epsilon) noise to integer counts.
std::vector<double> laplace_counts(const std::vector<long long>& counts,
                                   double epsilon, SeededRng& rng);

/// Argmax of counts + Laplace(1/epsilon); ties in the noisy vector break to
/// the lowest index. An infinite epsilon is the noiseless flag and returns
/// the plain argmax.
std::size_t report_noisy_max(const std::vector<long long>& counts,
                             double epsilon, SeededRng& rng);

/// min{1, C/||g||} * g. The zero vector maps to itself.
std::vector<double> clip_l2(const std::vector<double>& g, double clip_bound);

/// In-place variant used by the per-example gradient path.
void clip_l2_inplace(std::vector<double>& g, double clip_bound);

double l2_norm(const std::vector<double>& v);

/// Inverts the closed-form forward diffusion sample: given x_t, the noise e
/// that produced it and the step t, returns x_0 = (x_t - e*sqrt(1-abar_t))
/// / sqrt(abar_t). Exact recovery of the input this release was supposed to
/// protect, which is the whole point of the reconstruction audit.
std::vector<double> dppromise_reconstruct(const std::vector<double>& x_t,
                                          const std::vector<double>& e,
                                          std::size_t t,
                                          const NoiseSchedule& sched);

} // namespace dpsynth
