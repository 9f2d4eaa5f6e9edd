#include "dpsynth/pe.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/kernels.hpp"
#include "dpsynth/mechanisms.hpp"

namespace dpsynth {

PeApi make_jitter_api(std::size_t dim, double initial_scale, double decay) {
    PeApi api;
    api.random = [dim](std::size_t n, SeededRng& rng) {
        std::vector<std::vector<double>> out(n, std::vector<double>(dim));
        for (auto& row : out)
            for (double& v : row) v = rng.uniform();
        return out;
    };
    api.variation = [dim, initial_scale, decay](const std::vector<double>& parent,
                                                std::size_t iteration, SeededRng& rng) {
        const double scale = initial_scale * std::pow(decay, static_cast<double>(iteration));
        std::vector<double> child(dim);
        for (std::size_t i = 0; i < dim; ++i)
            child[i] = std::clamp(parent[i] + scale * rng.normal(), 0.0, 1.0);
        return child;
    };
    return api;
}

namespace {

double mean_nn_distance(const std::vector<std::vector<double>>& candidates,
                        const std::vector<double>& private_flat,
                        std::size_t n_private, std::size_t dim) {
    std::vector<double> flat(candidates.size() * dim);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        std::copy(candidates[i].begin(), candidates[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * dim));
    std::vector<std::size_t> idx(candidates.size());
    std::vector<double> sq(candidates.size());
    kernels::nearest_neighbor(flat.data(), candidates.size(), private_flat.data(),
                              n_private, dim, idx.data(), sq.data());
    double acc = 0.0;
    for (double s : sq) acc += std::sqrt(s);
    return acc / static_cast<double>(candidates.size());
}

} // namespace

PeResult pe_synthesize(const std::vector<std::vector<double>>& private_points,
                       const PeApi& api, const PeConfig& cfg, SeededRng& rng,
                       AccountantLedger& ledger) {
    if (cfg.iterations < 1) throw ValidationError("PE needs at least one iteration");
    if (cfg.n_candidates < 1) throw ValidationError("PE needs candidates");
    if (private_points.empty()) throw ValidationError("PE needs private points");
    if (cfg.sigma_hist < 0.0) throw ValidationError("histogram sigma must be nonnegative");

    const std::size_t dim = private_points.front().size();
    const std::size_t n_private = private_points.size();
    std::vector<double> private_flat(n_private * dim);
    for (std::size_t i = 0; i < n_private; ++i) {
        if (private_points[i].size() != dim)
            throw ValidationError("private point dimensions disagree");
        std::copy(private_points[i].begin(), private_points[i].end(),
                  private_flat.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }

    const double threshold = cfg.threshold >= 0.0 ? cfg.threshold : 2.0 * cfg.sigma_hist;
    const uint64_t sub_seed = rng.next_u64();
    SeededRng api_rng(sub_seed, 1), noise_rng(sub_seed, 2), resample_rng(sub_seed, 3);

    PeResult result;
    auto candidates = api.random(cfg.n_candidates, api_rng);
    result.mean_nn_distance.push_back(
        mean_nn_distance(candidates, private_flat, n_private, dim));

    std::vector<double> cand_flat(cfg.n_candidates * dim);
    for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
        for (std::size_t i = 0; i < candidates.size(); ++i)
            std::copy(candidates[i].begin(), candidates[i].end(),
                      cand_flat.begin() + static_cast<std::ptrdiff_t>(i * dim));

        // Every private point votes for its nearest candidate.
        std::vector<std::size_t> vote(n_private);
        kernels::nearest_neighbor(private_flat.data(), n_private, cand_flat.data(),
                                  candidates.size(), dim, vote.data(), nullptr);
        std::vector<double> histogram(candidates.size(), 0.0);
        for (std::size_t v : vote) histogram[v] += 1.0;

        const auto noisy =
            gaussian_mechanism(histogram, {1.0, cfg.sigma_hist}, noise_rng);

        std::vector<double> weights(noisy.size());
        bool any = false;
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            weights[i] = noisy[i] < threshold ? 0.0 : std::max(0.0, noisy[i]);
            any = any || weights[i] > 0.0;
        }
        if (!any) {
            // Thresholding wiped the histogram: fall back to the raw noisy
            // counts, clamped at zero, and flag the run.
            result.fallback_used = true;
            for (std::size_t i = 0; i < noisy.size(); ++i)
                weights[i] = std::max(0.0, noisy[i]);
            any = std::any_of(weights.begin(), weights.end(),
                              [](double w) { return w > 0.0; });
            if (!any) weights.assign(noisy.size(), 1.0);
        }

        // Multinomial resampling proportional to the surviving mass.
        std::vector<double> cumulative(weights.size());
        double total = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            total += weights[i];
            cumulative[i] = total;
        }
        std::vector<std::vector<double>> next(cfg.n_candidates);
        for (std::size_t i = 0; i < cfg.n_candidates; ++i) {
            const double u = resample_rng.uniform() * total;
            const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
            const auto parent = static_cast<std::size_t>(it - cumulative.begin());
            next[i] = api.variation(candidates[std::min(parent, candidates.size() - 1)],
                                    iter, api_rng);
        }
        candidates = std::move(next);
        result.mean_nn_distance.push_back(
            mean_nn_distance(candidates, private_flat, n_private, dim));
    }

    ledger.add_gaussian(cfg.sigma_hist, cfg.iterations);
    result.samples = std::move(candidates);
    return result;
}

} // namespace dpsynth
