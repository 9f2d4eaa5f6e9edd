#include "dpsynth/merf.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/kernels.hpp"

namespace dpsynth {

MlpSpec make_generator_spec(std::size_t sample_dim, const MerfConfig& cfg,
                            std::size_t num_classes) {
    MlpSpec spec;
    spec.layer_sizes.push_back(cfg.latent_dim + num_classes);
    for (std::size_t h : cfg.gen_hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(sample_dim);
    spec.activation = Activation::tanh;
    spec.output_head = OutputHead::linear;
    spec.validate();
    return spec;
}

namespace {

std::vector<double> generator_input(const std::vector<double>& z, std::size_t label,
                                    std::size_t num_classes) {
    std::vector<double> in(z);
    in.resize(z.size() + num_classes, 0.0);
    if (num_classes > 0) in[z.size() + label] = 1.0;
    return in;
}

struct ClassTargets {
    // Per-class target embeddings and weights; a single entry when the
    // embedding is unconditional.
    std::vector<const std::vector<double>*> mu;
    std::vector<double> weight;
    std::size_t count() const { return mu.size(); }
};

ClassTargets targets_of(const MeanEmbedding& released) {
    ClassTargets t;
    if (released.has_classes()) {
        const double total = static_cast<double>(released.count);
        for (std::size_t k = 0; k < released.per_class.size(); ++k) {
            if (released.class_counts[k] == 0) continue;
            t.mu.push_back(&released.per_class[k]);
            t.weight.push_back(static_cast<double>(released.class_counts[k]) / total);
        }
    } else {
        t.mu.push_back(&released.mu);
        t.weight.push_back(1.0);
    }
    return t;
}

// Objective and, when grad != nullptr, its gradient for a batch of latents.
double merf_batch_objective(const ModelCheckpoint& gen, const ClassTargets& targets,
                            const RffMap& map, std::size_t num_classes,
                            const std::vector<std::vector<double>>& latents,
                            const std::vector<std::size_t>& labels,
                            std::vector<double>* grad) {
    const std::size_t B = latents.size();
    const std::size_t d = gen.spec.output_dim();
    const std::size_t D = map.feature_dim;
    const std::size_t half = D / 2;
    const std::size_t groups = targets.count();

    // Forward all samples and featurize.
    std::vector<std::vector<double>> inputs(B), outputs(B);
    std::vector<double> samples(B * d);
    const auto bs = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < bs; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        inputs[ui] = generator_input(latents[ui], labels[ui] % std::max<std::size_t>(1, num_classes),
                                     num_classes);
        outputs[ui] = forward(gen, inputs[ui]);
        std::copy(outputs[ui].begin(), outputs[ui].end(), samples.begin() + i * static_cast<std::ptrdiff_t>(d));
    }
    const std::vector<double> features = rff_feature_matrix(samples.data(), B, map);

    // Per-group batch means over the features.
    std::vector<std::size_t> group_of(B);
    std::vector<double> group_mean(groups * D, 0.0);
    std::vector<std::size_t> group_n(groups, 0);
    for (std::size_t i = 0; i < B; ++i) {
        const std::size_t g = groups == 1 ? 0 : labels[i] % groups;
        group_of[i] = g;
        ++group_n[g];
        const double* row = features.data() + i * D;
        for (std::size_t j = 0; j < D; ++j) group_mean[g * D + j] += row[j];
    }
    double objective = 0.0;
    std::vector<double> residual(groups * D, 0.0); // mu_hat - mu_tilde, weighted
    for (std::size_t g = 0; g < groups; ++g) {
        if (group_n[g] == 0) continue;
        for (std::size_t j = 0; j < D; ++j)
            group_mean[g * D + j] /= static_cast<double>(group_n[g]);
        const std::vector<double>& target = *targets.mu[g];
        double sq = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double r = group_mean[g * D + j] - target[j];
            residual[g * D + j] = r;
            sq += r * r;
        }
        objective += targets.weight[g] * sq;
    }
    if (!grad) return objective;

    grad->assign(gen.params.size(), 0.0);
    std::vector<std::vector<double>> per_sample_grads(B);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < bs; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const std::size_t g = group_of[ui];
        const double scale = 2.0 * targets.weight[g] / static_cast<double>(group_n[g]);
        const double* row = features.data() + ui * D;
        // dL/dx through the cos/sin pairs, using the stored feature values.
        std::vector<double> dx(d, 0.0);
        for (std::size_t j = 0; j < half; ++j) {
            const double dcos = scale * residual[g * D + 2 * j];
            const double dsin = scale * residual[g * D + 2 * j + 1];
            const double coeff = -dcos * row[2 * j + 1] + dsin * row[2 * j];
            if (coeff == 0.0) continue;
            const double* w = map.frequencies.data() + j * map.input_dim;
            for (std::size_t k = 0; k < d; ++k) dx[k] += coeff * w[k];
        }
        per_sample_grads[ui] = grad_from_output(gen, inputs[ui], dx);
    }
    for (const auto& g : per_sample_grads)
        for (std::size_t p = 0; p < grad->size(); ++p) (*grad)[p] += g[p];
    return objective;
}

std::vector<std::vector<double>> latent_bank(std::size_t n, std::size_t latent_dim,
                                             SeededRng& rng) {
    std::vector<std::vector<double>> z(n, std::vector<double>(latent_dim));
    for (auto& row : z)
        for (double& v : row) v = rng.normal();
    return z;
}

std::vector<std::size_t> cycling_labels(std::size_t n, std::size_t groups) {
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = groups == 0 ? 0 : i % groups;
    return labels;
}

} // namespace

MerfResult dpmerf_train(const Dataset& sensitive, const RffMap& map,
                        const PrivacySpec& target, const MerfConfig& cfg,
                        SeededRng& rng, AccountantLedger& ledger) {
    target.validate();
    if (map.input_dim != sensitive.sample_dim())
        throw ValidationError("feature map does not match the dataset dimension");

    const double sigma = target.is_infinite() ? 0.0 : calibrate_sigma(target, 1.0, 1);
    const uint64_t sub_seed = rng.next_u64();

    // The single mechanism-guarded touch of the sensitive data.
    SeededRng release_rng(sub_seed, 1);
    MerfResult result;
    result.sigma_used = sigma;
    result.released = noisy_mean_embedding(sensitive, map, sigma, cfg.notion,
                                           release_rng, cfg.class_conditional);
    ledger.add_gaussian(sigma, 1);

    const std::size_t num_classes = cfg.class_conditional ? sensitive.num_classes() : 0;
    const MlpSpec gen_spec =
        make_generator_spec(sensitive.sample_dim(), cfg, num_classes);
    SeededRng init_rng(sub_seed, 2), batch_rng(sub_seed, 3), eval_rng(sub_seed, 4);
    ModelCheckpoint gen = init_checkpoint(gen_spec, init_rng);

    const ClassTargets targets = targets_of(result.released);
    const auto eval_z = latent_bank(512, cfg.latent_dim, eval_rng);
    const auto eval_labels = cycling_labels(512, targets.count());

    result.initial_objective = merf_batch_objective(
        gen, targets, map, num_classes, eval_z, eval_labels, nullptr);

    Adam opt;
    opt.lr = cfg.lr;
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        const auto z = latent_bank(cfg.batch, cfg.latent_dim, batch_rng);
        const auto labels = cycling_labels(cfg.batch, targets.count());
        std::vector<double> grad;
        merf_batch_objective(gen, targets, map, num_classes, z,
                             labels, &grad);
        opt.step(gen.params, grad);
        ++gen.step;
    }

    result.final_objective = merf_batch_objective(
        gen, targets, map, num_classes, eval_z, eval_labels, nullptr);
    gen.meta["trainer"] = "dp-merf";
    gen.meta["conditional"] = cfg.class_conditional ? "1" : "0";
    result.generator = std::move(gen);
    return result;
}

std::vector<std::vector<double>> merf_generate(const ModelCheckpoint& generator,
                                               std::size_t latent_dim,
                                               std::size_t num_classes,
                                               std::size_t n, SeededRng& rng) {
    std::vector<std::vector<double>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> z(latent_dim);
        for (double& v : z) v = rng.normal();
        const std::size_t label = num_classes == 0 ? 0 : i % num_classes;
        out[i] = forward(generator, generator_input(z, label, num_classes));
        for (double& v : out[i]) v = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

double merf_objective(const ModelCheckpoint& generator, const MeanEmbedding& released,
                      const RffMap& map, std::size_t latent_dim,
                      std::size_t num_classes, std::size_t eval_batch,
                      uint64_t eval_seed) {
    SeededRng rng(eval_seed, 4);
    const ClassTargets targets = targets_of(released);
    const auto z = latent_bank(eval_batch, latent_dim, rng);
    const auto labels = cycling_labels(eval_batch, targets.count());
    return merf_batch_objective(generator, targets, map, num_classes, z,
                                labels, nullptr);
}

} // namespace dpsynth
