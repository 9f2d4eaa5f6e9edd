#include "dpsynth/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/mechanisms.hpp"

namespace dpsynth {

std::vector<double> time_features(std::size_t t, std::size_t total_steps) {
    std::vector<double> f(kTimeFeatureDim);
    const double pos = static_cast<double>(t) / static_cast<double>(total_steps);
    for (std::size_t j = 0; j < kTimeFeatureDim / 2; ++j) {
        const double freq = std::pow(10000.0, -static_cast<double>(j) * 2.0 /
                                                   static_cast<double>(kTimeFeatureDim));
        f[2 * j] = std::sin(2.0 * M_PI * pos / freq);
        f[2 * j + 1] = std::cos(2.0 * M_PI * pos / freq);
    }
    return f;
}

std::vector<double> denoiser_input(const std::vector<double>& x_t, std::size_t t,
                                   std::size_t total_steps, std::size_t label,
                                   std::size_t num_classes, bool conditional) {
    std::vector<double> in;
    in.reserve(x_t.size() + kTimeFeatureDim + num_classes);
    in.insert(in.end(), x_t.begin(), x_t.end());
    const auto tf = time_features(t, total_steps);
    in.insert(in.end(), tf.begin(), tf.end());
    std::vector<double> onehot(num_classes, 0.0);
    if (conditional && num_classes > 0) {
        if (label >= num_classes) throw ValidationError("label out of range");
        onehot[label] = 1.0;
    }
    in.insert(in.end(), onehot.begin(), onehot.end());
    return in;
}

MlpSpec make_denoiser_spec(std::size_t sample_dim,
                           const std::vector<std::size_t>& hidden,
                           std::size_t num_classes) {
    MlpSpec spec;
    spec.layer_sizes.push_back(sample_dim + kTimeFeatureDim + num_classes);
    for (std::size_t h : hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(sample_dim);
    spec.activation = Activation::tanh;
    spec.output_head = OutputHead::linear;
    spec.validate();
    return spec;
}

namespace {

// Stratified draw of a step inside bin b of [1, T].
std::size_t stratified_step(std::size_t b, std::size_t bins, std::size_t total,
                            SeededRng& rng) {
    const double lo = static_cast<double>(b) / static_cast<double>(bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    const double u = lo + (hi - lo) * rng.uniform();
    const auto t = 1 + static_cast<std::size_t>(u * static_cast<double>(total));
    return std::min(t, total);
}

// Gradient of the example's averaged noise-prediction loss; also returns
// the loss value. Draws are deterministic per (seed, stream).
std::vector<double> multiplicity_grad(const ModelCheckpoint& ckpt,
                                      const NoiseSchedule& sched,
                                      const std::vector<double>& x0,
                                      std::size_t label, std::size_t num_classes,
                                      bool conditional, std::size_t k_mult,
                                      SeededRng draw_rng, double* loss_out) {
    std::vector<double> grad(ckpt.params.size(), 0.0);
    double loss_acc = 0.0;
    for (std::size_t j = 0; j < k_mult; ++j) {
        const std::size_t t = stratified_step(j, k_mult, sched.steps, draw_rng);
        std::vector<double> e(x0.size());
        for (double& v : e) v = draw_rng.normal();
        const auto xt = diffuse_forward(x0, t, e, sched);
        Example ex{denoiser_input(xt, t, sched.steps, label, num_classes, conditional),
                   e};
        double term = 0.0;
        const auto g = grad_single(ckpt, ex, Loss::mse, &term);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        loss_acc += term;
    }
    const double inv = 1.0 / static_cast<double>(k_mult);
    for (double& v : grad) v *= inv;
    if (loss_out) *loss_out = loss_acc * inv;
    return grad;
}

} // namespace

DiffusionTrainResult dpdmlite_train(const Dataset& sensitive,
                                    const NoiseSchedule& sched,
                                    const PrivacySpec& target,
                                    const MlpSpec& denoiser_spec,
                                    const DiffusionTrainConfig& cfg, SeededRng& rng,
                                    AccountantLedger& ledger,
                                    const ModelCheckpoint* init) {
    if (cfg.noise_multiplicity < 1)
        throw ValidationError("noise multiplicity must be at least 1");
    sched.validate();
    target.validate();

    DpSgdConfig dpsgd = cfg.dpsgd;
    if (cfg.sigma_override >= 0.0) {
        dpsgd.sigma = cfg.sigma_override;
        if (!target.is_infinite()) {
            // A fixed multiplier can overshoot; refuse before burning compute.
            AccountantLedger prospective;
            for (const auto& e : ledger.events())
                if (e.kind == AccountantLedger::Event::Kind::pure)
                    prospective.add_pure(e.epsilon);
                else if (e.kind == AccountantLedger::Event::Kind::gaussian)
                    prospective.add_gaussian(e.sigma, e.count);
                else
                    prospective.add_subsampled_gaussian(e.q, e.sigma, e.count);
            prospective.add_subsampled_gaussian(dpsgd.q, dpsgd.sigma, dpsgd.steps);
            if (compose_and_convert(prospective, target.delta) > target.epsilon + 1e-9)
                throw BudgetError("configured sigma cannot meet the privacy target");
        }
    } else if (target.is_infinite()) {
        dpsgd.sigma = 0.0;
    } else {
        dpsgd.sigma = calibrate_sigma(target, dpsgd.q, dpsgd.steps, &ledger);
    }
    dpsgd.validate();

    const uint64_t sub_seed = rng.next_u64();
    SeededRng batch_rng(sub_seed, 1), noise_rng(sub_seed, 2), init_rng(sub_seed, 3);

    ModelCheckpoint ckpt =
        init ? *init : init_checkpoint(denoiser_spec, init_rng);
    if (ckpt.spec.param_count() != ckpt.params.size())
        throw ValidationError("denoiser checkpoint does not match its spec");

    const std::size_t n = sensitive.size();
    const std::size_t K = sensitive.num_classes();
    const std::size_t d = sensitive.sample_dim();

    DiffusionTrainResult result;
    for (std::size_t step = 0; step < dpsgd.steps; ++step) {
        const auto idx = poisson_batch(n, dpsgd.q, batch_rng);
        std::vector<std::vector<double>> grads(idx.size());
        std::vector<double> losses(idx.size(), 0.0);

        // One bulk access per step; every read is covered by the ledgered
        // subsampled-Gaussian event below.
        const Tensor& images = sensitive.images();
        const auto m = static_cast<std::ptrdiff_t>(idx.size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t bi = 0; bi < m; ++bi) {
            const std::size_t i = idx[static_cast<std::size_t>(bi)];
            std::vector<double> x0(d);
            std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                        x0.begin());
            grads[static_cast<std::size_t>(bi)] = multiplicity_grad(
                ckpt, sched, x0, sensitive.labels()[i], K, cfg.conditional,
                cfg.noise_multiplicity,
                SeededRng(sub_seed, (step << 24) ^ (i + 16)),
                &losses[static_cast<std::size_t>(bi)]);
        }
        ckpt = dpsgd_step(ckpt, grads, dpsgd, noise_rng);
        if (!idx.empty()) {
            // Fixed-order sum keeps the recorded loss thread-count invariant.
            double step_loss = 0.0;
            for (double l : losses) step_loss += l;
            result.loss_history.push_back(step_loss / static_cast<double>(idx.size()));
        }
    }

    ledger.add_subsampled_gaussian(dpsgd.q, dpsgd.sigma, dpsgd.steps);
    if (!target.is_infinite() &&
        compose_and_convert(ledger, target.delta) > target.epsilon + 1e-9)
        throw BudgetError("diffusion training exceeded its privacy target");

    result.checkpoint = std::move(ckpt);
    result.checkpoint.meta["trainer"] = "dpdm-lite";
    result.checkpoint.meta["conditional"] = cfg.conditional ? "1" : "0";
    result.sigma_used = dpsgd.sigma;
    result.final_train_loss =
        result.loss_history.empty() ? 0.0 : result.loss_history.back();
    return result;
}

double diffusion_eval_loss(const ModelCheckpoint& ckpt, const NoiseSchedule& sched,
                           const Dataset& ds, const std::vector<std::size_t>& idx,
                           bool conditional, uint64_t eval_seed) {
    if (idx.empty()) throw ValidationError("evaluation slice is empty");
    const std::size_t d = ds.sample_dim();
    const Tensor& images = ds.images();
    std::vector<double> losses(idx.size());
    const auto m = static_cast<std::ptrdiff_t>(idx.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t bi = 0; bi < m; ++bi) {
        const std::size_t i = idx[static_cast<std::size_t>(bi)];
        SeededRng rng(eval_seed, i + 1); // fixed draws per example
        std::vector<double> x0(d);
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                    x0.begin());
        const std::size_t t = 1 + rng.uniform_below(sched.steps);
        std::vector<double> e(d);
        for (double& v : e) v = rng.normal();
        const auto xt = diffuse_forward(x0, t, e, sched);
        Example ex{denoiser_input(xt, t, sched.steps, ds.labels()[i],
                                  ds.num_classes(), conditional),
                   e};
        losses[static_cast<std::size_t>(bi)] = loss_value(ckpt, ex, Loss::mse);
    }
    double acc = 0.0;
    for (double l : losses) acc += l;
    return acc / static_cast<double>(idx.size());
}

std::vector<std::vector<double>> generate_diffusion(
    const ModelCheckpoint& ckpt, const NoiseSchedule& sched, std::size_t n,
    const std::vector<std::size_t>& labels, SeededRng& rng) {
    sched.validate();
    const bool conditional = ckpt.meta.count("conditional") == 0 ||
                             ckpt.meta.at("conditional") == "1";
    const std::size_t d = ckpt.spec.output_dim();
    const std::size_t K =
        ckpt.spec.input_dim() - d - kTimeFeatureDim; // label slot width

    std::vector<std::vector<double>> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t label = labels.empty() ? 0 : labels[s % labels.size()];
        std::vector<double> x(d);
        for (double& v : x) v = rng.normal();

        for (std::size_t t = sched.steps; t >= 1; --t) {
            const auto in =
                denoiser_input(x, t, sched.steps, label, K, conditional);
            const auto e_hat = forward(ckpt, in);
            const double ab = sched.alphabar_at(t);
            const double beta = sched.beta_at(t);
            const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
            const double coef = beta / std::sqrt(1.0 - ab);
            for (std::size_t i = 0; i < d; ++i)
                x[i] = inv_sqrt_alpha * (x[i] - coef * e_hat[i]);
            if (t > 1) {
                const double ab_prev = sched.alphabar_at(t - 1);
                const double post_var = beta * (1.0 - ab_prev) / (1.0 - ab);
                const double std_dev = std::sqrt(std::max(0.0, post_var));
                for (double& v : x) v += std_dev * rng.normal();
            }
        }
        for (double& v : x) v = std::clamp(v, 0.0, 1.0);
        out[s] = std::move(x);
    }
    return out;
}

CentralImages dpfeta_central(const Dataset& sensitive, std::size_t n_central,
                             double pixel_clip, double sigma, SeededRng& rng,
                             AccountantLedger& ledger) {
    if (n_central < 1) throw ValidationError("need at least one central image per class");
    if (!(pixel_clip > 0.0)) throw ValidationError("pixel clip must be positive");

    const std::size_t K = sensitive.num_classes();
    const std::size_t d = sensitive.sample_dim();
    const Tensor& images = sensitive.images(); // single bulk access

    std::vector<std::vector<std::size_t>> by_class(K);
    for (std::size_t i = 0; i < sensitive.size(); ++i)
        by_class[sensitive.labels()[i]].push_back(i);

    CentralImages out;
    out.n_central = n_central;
    out.pixel_clip = pixel_clip;
    out.sigma = sigma;
    out.images.assign(K, {});
    out.group_counts.assign(K, {});

    for (std::size_t k = 0; k < K; ++k) {
        if (by_class[k].size() < n_central)
            throw ValidationError("class smaller than the requested group count");
        // Contiguous chunks with sizes within one of each other.
        const std::size_t nk = by_class[k].size();
        std::size_t start = 0;
        for (std::size_t g = 0; g < n_central; ++g) {
            const std::size_t count = nk / n_central + (g < nk % n_central ? 1 : 0);
            std::vector<double> mean(d, 0.0);
            for (std::size_t j = start; j < start + count; ++j) {
                const std::size_t i = by_class[k][j];
                std::vector<double> x(d);
                std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                            x.begin());
                clip_l2_inplace(x, pixel_clip);
                for (std::size_t c = 0; c < d; ++c) mean[c] += x[c];
            }
            for (double& v : mean) v /= static_cast<double>(count);
            const GaussianNoiseSpec spec{pixel_clip / static_cast<double>(count), sigma};
            out.images[k].push_back(gaussian_mechanism(mean, spec, rng));
            out.group_counts[k].push_back(count);
            start += count;
        }
    }
    ledger.add_gaussian(sigma, 1);
    return out;
}

namespace {

// Non-private warm-up of the denoiser on the released central images.
ModelCheckpoint central_pretrain(const CentralImages& central,
                                 const MlpSpec& denoiser_spec,
                                 const NoiseSchedule& sched, bool conditional,
                                 std::size_t iters, double lr, SeededRng& rng) {
    ModelCheckpoint ckpt = init_checkpoint(denoiser_spec, rng);
    Adam opt;
    opt.lr = lr;
    const std::size_t K = central.images.size();
    const std::size_t d = denoiser_spec.output_dim();

    std::vector<std::pair<std::size_t, const std::vector<double>*>> pool;
    for (std::size_t k = 0; k < K; ++k)
        for (const auto& img : central.images[k]) pool.emplace_back(k, &img);
    if (pool.empty()) return ckpt;

    for (std::size_t it = 0; it < iters; ++it) {
        const auto& [label, img] = pool[it % pool.size()];
        const std::size_t t = 1 + rng.uniform_below(sched.steps);
        std::vector<double> e(d);
        for (double& v : e) v = rng.normal();
        const auto xt = diffuse_forward(*img, t, e, sched);
        Example ex{denoiser_input(xt, t, sched.steps, label, K, conditional), e};
        opt.step(ckpt.params, grad_single(ckpt, ex, Loss::mse));
    }
    ckpt.meta["pretrain_mode"] = "central_images";
    return ckpt;
}

} // namespace

DiffusionTrainResult dpfeta_train(const Dataset& sensitive,
                                  const NoiseSchedule& sched,
                                  const PrivacySpec& target,
                                  const MlpSpec& denoiser_spec,
                                  const FetaConfig& cfg, SeededRng& rng,
                                  AccountantLedger& ledger) {
    target.validate();
    if (cfg.central_budget_fraction < 0.0 || cfg.central_budget_fraction >= 1.0)
        throw ValidationError("central budget fraction must lie in [0,1)");

    if (cfg.central_budget_fraction == 0.0)
        return dpdmlite_train(sensitive, sched, target, denoiser_spec,
                              cfg.diffusion, rng, ledger);

    double central_sigma = 0.0;
    if (!target.is_infinite()) {
        const PrivacySpec central_target{
            cfg.central_budget_fraction * target.epsilon, target.delta};
        central_sigma = calibrate_sigma(central_target, 1.0, 1);
    }
    const CentralImages central = dpfeta_central(
        sensitive, cfg.n_central, cfg.pixel_clip, central_sigma, rng, ledger);

    SeededRng warm_rng(rng.next_u64(), 7);
    const ModelCheckpoint warm = central_pretrain(
        central, denoiser_spec, sched, cfg.diffusion.conditional,
        cfg.central_pretrain_iters, cfg.central_pretrain_lr, warm_rng);

    // The DP-SGD sigma is calibrated jointly with the central release
    // already on the ledger, so the converted total stays under target.
    DiffusionTrainResult result = dpdmlite_train(
        sensitive, sched, target, denoiser_spec, cfg.diffusion, rng, ledger, &warm);
    result.checkpoint.meta["trainer"] = "dp-feta";
    return result;
}

ModelCheckpoint pretrain(const MlpSpec& denoiser_spec, const Dataset& public_ds,
                         PretrainMode mode, const NoiseSchedule& sched,
                         std::size_t iters, std::size_t batch_size, double lr,
                         SeededRng& rng, std::size_t sensitive_classes) {
    const std::size_t d = denoiser_spec.output_dim();
    const std::size_t K = denoiser_spec.input_dim() - d - kTimeFeatureDim;
    if (public_ds.sample_dim() != d)
        throw ValidationError("public dataset dimension does not match the denoiser");
    if (mode == PretrainMode::conditional && public_ds.num_classes() > K)
        throw ValidationError("conditional pretraining needs label-compatible public data");
    if (mode == PretrainMode::random_label && sensitive_classes == 0)
        sensitive_classes = K;

    ModelCheckpoint ckpt = init_checkpoint(denoiser_spec, rng);
    Adam opt;
    opt.lr = lr;
    const Tensor& images = public_ds.images();
    const std::size_t n = public_ds.size();

    for (std::size_t it = 0; it < iters; ++it) {
        std::vector<double> grad(ckpt.params.size(), 0.0);
        std::vector<Example> batch(batch_size);
        for (std::size_t b = 0; b < batch_size; ++b) {
            const std::size_t i = rng.uniform_below(n);
            std::vector<double> x0(d);
            std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                        x0.begin());
            std::size_t label = 0;
            bool conditional = true;
            switch (mode) {
                case PretrainMode::conditional:
                    label = public_ds.labels()[i];
                    break;
                case PretrainMode::random_label:
                    label = rng.uniform_below(sensitive_classes);
                    break;
                case PretrainMode::unconditional:
                    conditional = false; // all-zero label vector
                    break;
            }
            const std::size_t t = 1 + rng.uniform_below(sched.steps);
            std::vector<double> e(d);
            for (double& v : e) v = rng.normal();
            const auto xt = diffuse_forward(x0, t, e, sched);
            batch[b] = {denoiser_input(xt, t, sched.steps, label, K, conditional), e};
        }
        const auto grads = per_example_grads(ckpt, batch, Loss::mse);
        for (const auto& g : grads)
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        for (double& v : grad) v /= static_cast<double>(batch_size);
        opt.step(ckpt.params, grad);
    }

    ckpt.meta["pretrain_mode"] = mode == PretrainMode::conditional ? "conditional"
                                 : mode == PretrainMode::unconditional
                                     ? "unconditional"
                                     : "random_label";
    ckpt.meta["conditional"] = mode == PretrainMode::unconditional ? "0" : "1";
    return ckpt;
}

} // namespace dpsynth
