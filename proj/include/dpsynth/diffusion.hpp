#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "dpsynth/accountant.hpp"
#include "dpsynth/dataset.hpp"
#include "dpsynth/schedule.hpp"
#include "dpsynth/tinynn.hpp"

namespace dpsynth {

/// Sinusoidal features encoding the diffusion step, concatenated to the
/// denoiser input along with a one-hot class row (zeros when
/// unconditional).
inline constexpr std::size_t kTimeFeatureDim = 8;

std::vector<double> time_features(std::size_t t, std::size_t total_steps);

/// Denoiser input layout: [x_t | time features | label one-hot].
std::vector<double> denoiser_input(const std::vector<double>& x_t, std::size_t t,
                                   std::size_t total_steps, std::size_t label,
                                   std::size_t num_classes, bool conditional);

/// MLP spec for a denoiser over d-dimensional samples with K classes.
MlpSpec make_denoiser_spec(std::size_t sample_dim,
                           const std::vector<std::size_t>& hidden,
                           std::size_t num_classes);

struct DiffusionTrainConfig {
    DpSgdConfig dpsgd;
    std::size_t noise_multiplicity = 32; // draws averaged inside one clipped gradient
    bool conditional = true;
    /// Resolve sigma from the target budget when unset (<0).
    double sigma_override = -1.0;
};

struct DiffusionTrainResult {
    ModelCheckpoint checkpoint;
    double final_train_loss = 0.0;
    std::vector<double> loss_history; // smoothed per-step training loss
    double sigma_used = 0.0;
};

/// DP-SGD training of the denoiser on the noise-prediction objective. Each
/// example averages its loss over `noise_multiplicity` stratified (t, e)
/// draws before the single per-example clip, so multiplicity never touches
/// the ledger: it records exactly `steps` subsampled-Gaussian events.
DiffusionTrainResult dpdmlite_train(const Dataset& sensitive,
                                    const NoiseSchedule& sched,
                                    const PrivacySpec& target,
                                    const MlpSpec& denoiser_spec,
                                    const DiffusionTrainConfig& cfg, SeededRng& rng,
                                    AccountantLedger& ledger,
                                    const ModelCheckpoint* init = nullptr);

/// Average noise-prediction loss over a slice with deterministic draws.
double diffusion_eval_loss(const ModelCheckpoint& ckpt, const NoiseSchedule& sched,
                           const Dataset& ds, const std::vector<std::size_t>& idx,
                           bool conditional, uint64_t eval_seed);

/// Ancestral reverse sampling for n samples with the given labels
/// (ignored when the checkpoint was trained unconditionally). Outputs are
/// clamped to [0,1].
std::vector<std::vector<double>> generate_diffusion(
    const ModelCheckpoint& ckpt, const NoiseSchedule& sched, std::size_t n,
    const std::vector<std::size_t>& labels, SeededRng& rng);

/// Per-class noisy mean images released once under the known-m notion.
struct CentralImages {
    std::size_t n_central = 0;
    double pixel_clip = 0.0;
    double sigma = 0.0;
    std::vector<std::vector<std::vector<double>>> images; // [K][n_central][d]
    std::vector<std::vector<std::size_t>> group_counts;   // [K][n_central]
};

/// Partitions each class into n_central groups, clips every image vector to
/// pixel_clip, averages per group and adds Gaussian noise with sensitivity
/// pixel_clip/m_group. One Gaussian release lands in the ledger.
CentralImages dpfeta_central(const Dataset& sensitive, std::size_t n_central,
                             double pixel_clip, double sigma, SeededRng& rng,
                             AccountantLedger& ledger);

struct FetaConfig {
    DiffusionTrainConfig diffusion;
    std::size_t n_central = 5;
    double pixel_clip = 1.0;
    double central_budget_fraction = 0.1; // share of epsilon for the release
    std::size_t central_pretrain_iters = 400;
    double central_pretrain_lr = 2e-3;
};

/// Central-image release, non-private warm-up on the released images, then
/// DP-SGD fine-tuning with the remaining budget; both events composed in
/// one ledger, converted jointly.
DiffusionTrainResult dpfeta_train(const Dataset& sensitive,
                                  const NoiseSchedule& sched,
                                  const PrivacySpec& target,
                                  const MlpSpec& denoiser_spec,
                                  const FetaConfig& cfg, SeededRng& rng,
                                  AccountantLedger& ledger);

enum class PretrainMode { conditional, unconditional, random_label };

/// Non-private pretraining of the denoiser on public data. Unconditional
/// mode feeds the all-zero label vector; random_label assigns uniform
/// labels over the sensitive class count.
ModelCheckpoint pretrain(const MlpSpec& denoiser_spec, const Dataset& public_ds,
                         PretrainMode mode, const NoiseSchedule& sched,
                         std::size_t iters, std::size_t batch_size, double lr,
                         SeededRng& rng, std::size_t sensitive_classes = 0);

} // namespace dpsynth
