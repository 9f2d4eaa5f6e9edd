#include "dpsynth/privimage.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/mechanisms.hpp"

namespace dpsynth {

ModelCheckpoint train_query_classifier(const Dataset& public_ds,
                                       const std::vector<std::size_t>& hidden,
                                       std::size_t epochs, double lr,
                                       SeededRng& rng) {
    MlpSpec spec;
    spec.layer_sizes.push_back(public_ds.sample_dim());
    for (std::size_t h : hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(public_ds.num_classes());
    spec.activation = Activation::relu;
    spec.output_head = OutputHead::softmax;

    ModelCheckpoint ckpt = init_checkpoint(spec, rng);
    Adam opt;
    opt.lr = lr;
    const std::size_t n = public_ds.size();
    const std::size_t batch_size = std::min<std::size_t>(64, n);
    const Tensor& images = public_ds.images();
    const std::size_t d = public_ds.sample_dim();

    const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
    for (std::size_t e = 0; e < epochs; ++e) {
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<Example> batch;
            for (std::size_t b = 0; b < batch_size; ++b) {
                const std::size_t i = rng.uniform_below(n);
                Example ex;
                ex.x.resize(d);
                std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                            ex.x.begin());
                ex.target.assign(public_ds.num_classes(), 0.0);
                ex.target[public_ds.labels()[i]] = 1.0;
                batch.push_back(std::move(ex));
            }
            const auto grads = per_example_grads(ckpt, batch, Loss::cross_entropy);
            std::vector<double> mean(ckpt.params.size(), 0.0);
            for (const auto& g : grads)
                for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += g[i];
            for (double& v : mean) v /= static_cast<double>(batch.size());
            opt.step(ckpt.params, mean);
            ++ckpt.step;
        }
    }
    ckpt.meta["trainer"] = "privimage-query";
    return ckpt;
}

PrivImageSelection privimage_select(const Dataset& public_ds,
                                    const Dataset& sensitive,
                                    const ModelCheckpoint& query_clf,
                                    double k_frac, double sigma_sel,
                                    SeededRng& rng, AccountantLedger& ledger) {
    if (!(k_frac > 0.0 && k_frac <= 1.0))
        throw ValidationError("selection fraction must lie in (0,1]");
    const std::size_t k_pub = public_ds.num_classes();
    if (query_clf.spec.output_dim() != k_pub)
        throw ValidationError("query classifier head does not match the public classes");

    // One pass over the sensitive images, all of it covered by the single
    // Gaussian release below.
    const Tensor& images = sensitive.images();
    const std::size_t d = sensitive.sample_dim();
    std::vector<double> histogram(k_pub, 0.0);
    for (std::size_t i = 0; i < sensitive.size(); ++i) {
        std::vector<double> x(d);
        std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, x.begin());
        const auto probs = forward(query_clf, x);
        const auto cls = static_cast<std::size_t>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        histogram[cls] += 1.0;
    }

    PrivImageSelection out;
    out.noisy_histogram = gaussian_mechanism(histogram, {1.0, sigma_sel}, rng);
    ledger.add_gaussian(sigma_sel, 1);

    const auto keep = static_cast<std::size_t>(
        std::ceil(k_frac * static_cast<double>(k_pub)));
    std::vector<std::size_t> order(k_pub);
    for (std::size_t i = 0; i < k_pub; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return out.noisy_histogram[a] > out.noisy_histogram[b];
    });
    out.top_classes.assign(order.begin(),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(keep, k_pub)));

    std::vector<bool> chosen(k_pub, false);
    for (std::size_t c : out.top_classes) chosen[c] = true;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < public_ds.size(); ++i)
        if (chosen[public_ds.labels()[i]]) idx.push_back(i);
    out.selected = take_subset(public_ds, idx);
    return out;
}

} // namespace dpsynth
