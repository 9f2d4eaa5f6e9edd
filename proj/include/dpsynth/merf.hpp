#pragma once

#include <cstddef>
#include <vector>

#include "dpsynth/accountant.hpp"
#include "dpsynth/dataset.hpp"
#include "dpsynth/embeddings.hpp"
#include "dpsynth/tinynn.hpp"

namespace dpsynth {

struct MerfConfig {
    std::size_t latent_dim = 4;
    std::vector<std::size_t> gen_hidden{48, 48};
    std::size_t iters = 800;
    std::size_t batch = 128;
    double lr = 1e-2;
    NeighborNotion notion = NeighborNotion::replace_one;
    bool class_conditional = true;
};

struct MerfResult {
    ModelCheckpoint generator;
    MeanEmbedding released; // the one noisy statistic the trainer saw
    double initial_objective = 0.0;
    double final_objective = 0.0;
    double sigma_used = 0.0;
};

/// Generator spec for a d-dimensional output with K label slots.
MlpSpec make_generator_spec(std::size_t sample_dim, const MerfConfig& cfg,
                            std::size_t num_classes);

/// Releases ONE noisy (class-conditional) mean embedding calibrated to the
/// whole budget, then fits the generator to it with plain Adam. Everything
/// after the release is post-processing: the ledger gains exactly one
/// Gaussian event and later training never appends another.
MerfResult dpmerf_train(const Dataset& sensitive, const RffMap& map,
                        const PrivacySpec& target, const MerfConfig& cfg,
                        SeededRng& rng, AccountantLedger& ledger);

/// Samples n points (labels cycling through the classes); outputs clamped
/// to [0,1] so they form a valid dataset.
std::vector<std::vector<double>> merf_generate(const ModelCheckpoint& generator,
                                               std::size_t latent_dim,
                                               std::size_t num_classes,
                                               std::size_t n, SeededRng& rng);

/// Objective the trainer minimizes: class-weighted squared distance between
/// the released embedding and the generated batch embedding.
double merf_objective(const ModelCheckpoint& generator, const MeanEmbedding& released,
                      const RffMap& map, std::size_t latent_dim,
                      std::size_t num_classes, std::size_t eval_batch,
                      uint64_t eval_seed);

} // namespace dpsynth
