#include "dpsynth/utility.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/accountant.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/mechanisms.hpp"

namespace dpsynth {

std::string protocol_name(Protocol p) {
    switch (p) {
        case Protocol::testfix: return "testfix";
        case Protocol::senv: return "senv";
        case Protocol::synv: return "synv";
        case Protocol::noisy_senv: return "noisy_senv";
    }
    return "unknown";
}

void ProtocolConfig::validate() const {
    if (protocol == Protocol::noisy_senv && !(eps_val > 0.0))
        throw ValidationError("noisy_senv needs a positive validation budget");
    if (protocol == Protocol::testfix && fixed_epochs < 1)
        throw ValidationError("testfix needs at least one epoch");
    if (epochs < 1 || checkpoint_stride < 1)
        throw ValidationError("training needs epochs and a positive stride");
    if (!(synv_holdout > 0.0 && synv_holdout < 1.0))
        throw ValidationError("synthetic holdout fraction must lie in (0,1)");
}

double accuracy(const ModelCheckpoint& ckpt, const Dataset& ds,
                const std::vector<std::size_t>& idx) {
    if (idx.empty()) throw ValidationError("accuracy over an empty slice");
    if (ckpt.spec.output_dim() < ds.num_classes())
        throw ValidationError("classifier head too small for the label range");
    std::size_t correct = 0;
    const Tensor& im = ds.images();
    const std::size_t d = ds.sample_dim();
    const auto n = static_cast<std::ptrdiff_t>(idx.size());
#pragma omp parallel for schedule(static) reduction(+ : correct)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
        const std::size_t i = idx[static_cast<std::size_t>(j)];
        std::vector<double> x(d);
        std::copy_n(im.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, x.begin());
        const auto out = forward(ckpt, x);
        const auto pred = static_cast<std::size_t>(
            std::max_element(out.begin(), out.end()) - out.begin());
        if (pred == ds.labels()[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

namespace {

std::vector<long long> correct_counts(const ModelCheckpoint& ckpt, const Dataset& ds,
                                      const std::vector<std::size_t>& idx) {
    const double acc = accuracy(ckpt, ds, idx);
    return {static_cast<long long>(std::llround(acc * static_cast<double>(idx.size())))};
}

} // namespace

UtilityResult train_eval_classifier(const Dataset& synthetic,
                                    const Dataset& sensitive,
                                    const MlpSpec& clf_spec,
                                    const ProtocolConfig& cfg, SeededRng& rng) {
    cfg.validate();
    if (synthetic.size() == 0) throw ValidationError("synthetic set is empty");
    const SplitManifest& split = sensitive.split();
    if (split.n_train() == 0 || split.n_val() == 0 || split.n_test() == 0)
        throw ValidationError("sensitive dataset needs train/val/test splits");

    const uint64_t sub_seed = rng.next_u64();
    SeededRng order_rng(sub_seed, 1);

    // Split the synthetic rows into a training pool and the synv holdout.
    std::vector<std::size_t> syn_idx(synthetic.size());
    for (std::size_t i = 0; i < syn_idx.size(); ++i) syn_idx[i] = i;
    shuffle_indices(syn_idx, order_rng);
    const auto holdout =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     cfg.synv_holdout * static_cast<double>(syn_idx.size())));
    const std::vector<std::size_t> syn_val(syn_idx.begin(),
                                           syn_idx.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<std::size_t> syn_train(syn_idx.begin() + static_cast<std::ptrdiff_t>(holdout),
                                       syn_idx.end());
    if (syn_train.empty()) throw ValidationError("synthetic training pool is empty");

    // Plain mini-batch SGD on the synthetic rows; snapshots per stride.
    ModelCheckpoint ckpt = init_checkpoint(clf_spec, order_rng);
    const std::size_t d = synthetic.sample_dim();
    const Tensor& syn_images = synthetic.images();
    const std::size_t k = clf_spec.output_dim();

    std::vector<ModelCheckpoint> snapshots;
    std::vector<std::size_t> snapshot_epochs;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(syn_train, order_rng);
        for (std::size_t from = 0; from < syn_train.size(); from += cfg.batch) {
            const std::size_t to = std::min(syn_train.size(), from + cfg.batch);
            std::vector<Example> batch;
            batch.reserve(to - from);
            for (std::size_t j = from; j < to; ++j) {
                const std::size_t i = syn_train[j];
                Example ex;
                ex.x.resize(d);
                std::copy_n(syn_images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                            ex.x.begin());
                ex.target.assign(k, 0.0);
                ex.target[synthetic.labels()[i]] = 1.0;
                batch.push_back(std::move(ex));
            }
            const auto grads = per_example_grads(ckpt, batch, Loss::cross_entropy);
            std::vector<double> mean(ckpt.params.size(), 0.0);
            for (const auto& g : grads)
                for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
            for (double& v : mean) v /= static_cast<double>(batch.size());
            for (std::size_t i = 0; i < ckpt.params.size(); ++i)
                ckpt.params[i] -= cfg.lr * mean[i];
            ++ckpt.step;
        }
        if (epoch % cfg.checkpoint_stride == 0 || epoch == cfg.epochs) {
            snapshots.push_back(ckpt);
            snapshot_epochs.push_back(epoch);
        }
    }

    UtilityResult result;
    result.protocol = cfg.protocol;
    std::size_t chosen = 0;
    switch (cfg.protocol) {
        case Protocol::testfix: {
            // The snapshot at the fixed epoch (or the nearest one taken).
            chosen = 0;
            for (std::size_t s = 0; s < snapshot_epochs.size(); ++s)
                if (snapshot_epochs[s] <= cfg.fixed_epochs) chosen = s;
            break;
        }
        case Protocol::senv: {
            // Selection on the sensitive TEST set: flagged, never silent.
            result.dp_violating = true;
            double best = -1.0;
            for (std::size_t s = 0; s < snapshots.size(); ++s) {
                const double acc = accuracy(snapshots[s], sensitive, split.test_idx);
                if (acc > best) {
                    best = acc;
                    chosen = s;
                }
            }
            break;
        }
        case Protocol::synv: {
            double best = -1.0;
            for (std::size_t s = 0; s < snapshots.size(); ++s) {
                const double acc = accuracy(snapshots[s], synthetic, syn_val);
                if (acc > best) {
                    best = acc;
                    chosen = s;
                }
            }
            break;
        }
        case Protocol::noisy_senv: {
            // Report-noisy-max over correct counts on the sensitive
            // validation split; only the winning index is consumed.
            std::vector<long long> counts;
            counts.reserve(snapshots.size());
            for (const auto& snap : snapshots)
                counts.push_back(correct_counts(snap, sensitive, split.val_idx)[0]);
            result.laplace_seed = sub_seed;
            SeededRng select_rng(sub_seed, 2);
            chosen = report_noisy_max(counts, cfg.eps_val, select_rng);
            if (cfg.release_val_counts) {
                result.val_counts = counts;
                result.val_counts_released = true;
            }
            result.eps_total = parallel_compose(cfg.eps_train, cfg.eps_val);
            break;
        }
    }

    result.snapshot_epochs = snapshot_epochs;
    result.selected_step = snapshot_epochs[chosen];
    result.test_accuracy = accuracy(snapshots[chosen], sensitive, split.test_idx);
    return result;
}

ProtocolComparison protocol_comparison(const Dataset& synthetic,
                                       const Dataset& sensitive,
                                       const MlpSpec& clf_spec,
                                       const ProtocolConfig& base,
                                       const std::vector<uint64_t>& seeds) {
    if (seeds.size() < 2)
        throw ValidationError("protocol comparison needs at least two seeds");

    const Protocol all[4] = {Protocol::testfix, Protocol::senv, Protocol::synv,
                             Protocol::noisy_senv};
    ProtocolComparison cmp;
    cmp.rows.resize(4);
    for (std::size_t p = 0; p < 4; ++p) cmp.rows[p].protocol = all[p];

    for (uint64_t seed : seeds) {
        for (std::size_t p = 0; p < 4; ++p) {
            ProtocolConfig cfg = base;
            cfg.protocol = all[p];
            SeededRng rng(seed, 17);
            const UtilityResult res =
                train_eval_classifier(synthetic, sensitive, clf_spec, cfg, rng);
            cmp.rows[p].per_seed.push_back(res.test_accuracy);
        }
    }

    for (auto& row : cmp.rows) {
        double mean = 0.0;
        for (double a : row.per_seed) mean += a;
        mean /= static_cast<double>(row.per_seed.size());
        double var = 0.0;
        for (double a : row.per_seed) var += (a - mean) * (a - mean);
        row.mean_accuracy = mean;
        row.std_accuracy = std::sqrt(var / static_cast<double>(row.per_seed.size()));
    }
    cmp.gap_senv_noisy = cmp.rows[1].mean_accuracy - cmp.rows[3].mean_accuracy;
    cmp.gap_senv_synv = cmp.rows[1].mean_accuracy - cmp.rows[2].mean_accuracy;
    return cmp;
}

} // namespace dpsynth
