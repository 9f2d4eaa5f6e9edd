#pragma once

#include <cstddef>
#include <vector>

#include "dpsynth/accountant.hpp"
#include "dpsynth/dataset.hpp"
#include "dpsynth/tinynn.hpp"

namespace dpsynth {

struct PrivImageSelection {
    Dataset selected;                      // public rows from the top classes
    std::vector<std::size_t> top_classes;  // chosen public class ids
    std::vector<double> noisy_histogram;   // released counts
};

/// Trains a softmax classifier on public labels only; the semantic query
/// function of the selection step.
ModelCheckpoint train_query_classifier(const Dataset& public_ds,
                                       const std::vector<std::size_t>& hidden,
                                       std::size_t epochs, double lr,
                                       SeededRng& rng);

/// Classifies every sensitive image with the public-label classifier,
/// noises the resulting class histogram (sensitivity 1, add-or-remove) and
/// keeps all public images in the top ceil(k_frac * K_pub) noisy classes.
/// Exactly one Gaussian event joins the ledger; the benchmark default
/// keeps 5% of the public classes.
PrivImageSelection privimage_select(const Dataset& public_ds,
                                    const Dataset& sensitive,
                                    const ModelCheckpoint& query_clf,
                                    double k_frac, double sigma_sel,
                                    SeededRng& rng, AccountantLedger& ledger);

} // namespace dpsynth
