#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dpsynth/dataset.hpp"
#include "dpsynth/rng.hpp"
#include "dpsynth/tinynn.hpp"

namespace dpsynth {

enum class Protocol { testfix, senv, synv, noisy_senv };

std::string protocol_name(Protocol p);

struct ProtocolConfig {
    Protocol protocol = Protocol::noisy_senv;
    double eps_val = 1.0;          // noisy_senv selection budget
    std::size_t fixed_epochs = 5;  // testfix
    std::size_t checkpoint_stride = 1; // snapshot cadence in epochs
    std::size_t epochs = 8;
    std::size_t batch = 64;
    double lr = 0.05;
    double eps_train = 1.0; // synthesizer budget, for the composed total
    double synv_holdout = 0.1;
    /// Diagnostic mode: carry the per-snapshot validation counts in the
    /// result. A DP run releases only the argmax and leaves this off.
    bool release_val_counts = false;

    void validate() const;
};

struct UtilityResult {
    Protocol protocol;
    std::size_t selected_step = 0;   // epoch index of the chosen snapshot
    double test_accuracy = 0.0;
    bool val_counts_released = false;
    bool dp_violating = false;       // senv reads the sensitive test set
    double eps_total = 0.0;          // parallel composition for noisy_senv
    uint64_t laplace_seed = 0;
    std::vector<long long> val_counts; // only in the diagnostic mode
    std::vector<std::size_t> snapshot_epochs;
};

/// Exact correct-count ratio of the checkpoint on the given sample rows.
double accuracy(const ModelCheckpoint& ckpt, const Dataset& ds,
                const std::vector<std::size_t>& idx);

/// Trains the classifier on the synthetic set with plain SGD (synthetic
/// data is post-processing), snapshots every stride epochs, then selects a
/// snapshot per the protocol. Only senv may read the sensitive test set
/// for selection, and its result carries the dp_violating flag.
UtilityResult train_eval_classifier(const Dataset& synthetic,
                                    const Dataset& sensitive,
                                    const MlpSpec& clf_spec,
                                    const ProtocolConfig& cfg, SeededRng& rng);

struct ProtocolRow {
    Protocol protocol;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    std::vector<double> per_seed;
};

struct ProtocolComparison {
    std::vector<ProtocolRow> rows;   // one per protocol
    double gap_senv_noisy = 0.0;     // mean senv - noisy_senv
    double gap_senv_synv = 0.0;      // mean senv - synv
};

/// Runs all four protocols for every seed and reports per-protocol
/// accuracy statistics together with the selection-bias gaps.
ProtocolComparison protocol_comparison(const Dataset& synthetic,
                                       const Dataset& sensitive,
                                       const MlpSpec& clf_spec,
                                       const ProtocolConfig& base,
                                       const std::vector<uint64_t>& seeds);

} // namespace dpsynth
