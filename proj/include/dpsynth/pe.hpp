#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dpsynth/accountant.hpp"
#include "dpsynth/rng.hpp"

namespace dpsynth {

/// The two foundation-model surfaces Private Evolution needs: fresh draws
/// and variations of an existing sample. No training ever happens here.
struct PeApi {
    std::function<std::vector<std::vector<double>>(std::size_t n, SeededRng&)> random;
    std::function<std::vector<double>(const std::vector<double>& parent,
                                      std::size_t iteration, SeededRng&)> variation;
};

/// Gaussian-jittered box API for desk-scale toys: random draws are uniform
/// over [0,1]^d, variations add noise whose scale decays per iteration.
PeApi make_jitter_api(std::size_t dim, double initial_scale = 0.15,
                      double decay = 0.6);

struct PeConfig {
    std::size_t n_candidates = 256;
    std::size_t iterations = 8;       // benchmark default
    double sigma_hist = 1.0;          // histogram noise std (sensitivity 1)
    double threshold = -1.0;          // negative resolves to 2 * sigma_hist
};

struct PeResult {
    std::vector<std::vector<double>> samples;   // final candidate set
    std::vector<double> mean_nn_distance;       // per iteration, initial first
    bool fallback_used = false;                 // thresholding wiped everything
};

/// Each private point votes for its nearest candidate; the histogram is
/// noised (sensitivity 1 add-or-remove), thresholded, and survivors are
/// resampled through the variation API. Records `iterations` Gaussian
/// releases and never trains on the private rows.
PeResult pe_synthesize(const std::vector<std::vector<double>>& private_points,
                       const PeApi& api, const PeConfig& cfg, SeededRng& rng,
                       AccountantLedger& ledger);

} // namespace dpsynth
