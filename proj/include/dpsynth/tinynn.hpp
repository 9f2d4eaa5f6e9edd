#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "dpsynth/kernels.hpp"
#include "dpsynth/rng.hpp"

namespace dpsynth {

enum class Activation { relu, tanh };
enum class OutputHead { linear, softmax };
enum class Loss { mse, cross_entropy };

struct MlpSpec {
    std::vector<std::size_t> layer_sizes; // input .. output, at least two
    Activation activation = Activation::relu;
    OutputHead output_head = OutputHead::linear;

    std::size_t param_count() const;
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    void validate() const;
};

/// Flat parameter vector plus its architecture and training position.
/// Layer l owns weights [out x in] row-major followed by its bias.
struct ModelCheckpoint {
    std::vector<double> params;
    MlpSpec spec;
    std::size_t step = 0;
    uint64_t rng_position = 0;
    std::map<std::string, std::string> meta;
};

/// Scaled-normal initialization, deterministic under the rng state.
ModelCheckpoint init_checkpoint(const MlpSpec& spec, SeededRng& rng);

/// Persist/load a checkpoint as a TensorFile beside a JSON spec sidecar.
void save_checkpoint(const std::string& path_stem, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::string& path_stem);

/// Deterministic feed-forward evaluation (head applied).
std::vector<double> forward(const ModelCheckpoint& ckpt, const std::vector<double>& x);

/// Activations of the last hidden layer; the penultimate feature space
/// used by classifier-based fidelity extractors.
std::vector<double> penultimate_features(const ModelCheckpoint& ckpt,
                                         const std::vector<double>& x);

struct Example {
    std::vector<double> x;
    std::vector<double> target; // regression target or one-hot class row
};

double loss_value(const ModelCheckpoint& ckpt, const Example& ex, Loss loss);

/// Gradient of the loss at one example, same layout as params. The loss
/// value falls out of the same forward pass when requested.
std::vector<double> grad_single(const ModelCheckpoint& ckpt, const Example& ex,
                                Loss loss, double* loss_out = nullptr);

/// One gradient per example; the mean over the batch equals the gradient of
/// the mean loss. Fans out across workers, reduction stays in index order.
std::vector<std::vector<double>> per_example_grads(
    const ModelCheckpoint& ckpt, const std::vector<Example>& batch, Loss loss,
    kernels::Exec exec = kernels::default_exec());

/// Gradient of the head-input vector fed backward through the network;
/// used by objectives whose loss lives outside the MLP (feature matching).
std::vector<double> grad_from_output(const ModelCheckpoint& ckpt,
                                     const std::vector<double>& x,
                                     const std::vector<double>& dout);

/// Each index joins the batch independently with probability q.
std::vector<std::size_t> poisson_batch(std::size_t n, double q, SeededRng& rng);

struct DpSgdConfig {
    double clip_bound = 1.0;   // C
    double sigma = 0.0;        // noise multiplier
    double q = 1.0;            // Poisson rate
    double lr = 0.1;           // eta
    std::size_t steps = 1;     // T

    void validate() const;
};

/// params <- params - lr * (mean_i clip(g_i, C) + (C sigma / |B|) z). An
/// empty batch is a no-op that still advances the step counter, so the
/// ledger's step count stays honest.
ModelCheckpoint dpsgd_step(const ModelCheckpoint& ckpt,
                           const std::vector<std::vector<double>>& example_grads,
                           const DpSgdConfig& cfg, SeededRng& rng);

/// Plain Adam for the non-private training loops (generator fitting,
/// pretraining on released or public data).
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(std::vector<double>& params, const std::vector<double>& grad);

private:
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

} // namespace dpsynth
