#include "dpsynth/fidelity.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/kernels.hpp"
#include "dpsynth/linalg.hpp"

namespace dpsynth {

GaussianFit fit_gaussian(const FeatureSet& features) {
    const std::size_t n = features.count, d = features.dim;
    if (n < 2) throw ValidationError("covariance estimation needs at least two rows");

    GaussianFit fit;
    fit.dim = d;
    fit.mu.resize(d);
    kernels::mean_rows(features.rows.data(), n, d, fit.mu.data());

    fit.sigma.assign(d * d, 0.0);
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = features.row(i);
        for (std::size_t a = 0; a < d; ++a) {
            const double da = row[a] - fit.mu[a];
            for (std::size_t b = a; b < d; ++b)
                fit.sigma[a * d + b] += da * (row[b] - fit.mu[b]);
        }
    }
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            const double v = fit.sigma[a * d + b] / denom;
            fit.sigma[a * d + b] = v;
            fit.sigma[b * d + a] = v;
        }

    if (d > n) {
        for (std::size_t a = 0; a < d; ++a) fit.sigma[a * d + a] += 1e-6;
        fit.regularized = true;
    }
    return fit;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.dim != b.dim) throw ValidationError("Gaussian fits have different dimensions");
    const std::size_t d = a.dim;

    double mean_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mu[i] - b.mu[i];
        mean_sq += diff * diff;
    }
    double trace_a = 0.0, trace_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        trace_a += a.sigma[i * d + i];
        trace_b += b.sigma[i * d + i];
    }

    // sqrt(Sa) via the symmetric eigen route, then eig(sqrt(Sa) Sb sqrt(Sa)).
    const std::vector<double> root_a =
        symmetric_function(a.sigma, d, [](double x) { return std::sqrt(x); });
    std::vector<double> tmp(d * d), cross(d * d);
    kernels::matmul(root_a.data(), b.sigma.data(), tmp.data(), d, d, d);
    kernels::matmul(tmp.data(), root_a.data(), cross.data(), d, d, d);
    // Symmetrize away the matmul round-off before decomposing.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (cross[i * d + j] + cross[j * d + i]);
            cross[i * d + j] = v;
            cross[j * d + i] = v;
        }
    const SymmetricEigen eig = eigen_symmetric(cross, d, /*want_vectors=*/false);
    double trace_sqrt = 0.0;
    for (double lambda : eig.eigenvalues)
        trace_sqrt += std::sqrt(std::max(0.0, lambda));

    return mean_sq + trace_a + trace_b - 2.0 * trace_sqrt;
}

double inception_score_proxy(const std::vector<double>& probs, std::size_t n,
                             std::size_t k) {
    if (n == 0 || k == 0 || probs.size() != n * k)
        throw ValidationError("probability matrix shape mismatch");

    std::vector<double> marginal(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = probs[i * k + j];
            if (p < 0.0) throw ValidationError("probabilities must be nonnegative");
            row_sum += p;
        }
        if (std::fabs(row_sum - 1.0) > 1e-6)
            throw ValidationError("probability rows must sum to one");
        for (std::size_t j = 0; j < k; ++j) marginal[j] += probs[i * k + j];
    }
    for (double& v : marginal) v /= static_cast<double>(n);

    double mean_kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double kl = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::max(probs[i * k + j], 1e-12);
            const double q = std::max(marginal[j], 1e-12);
            if (probs[i * k + j] > 0.0) kl += probs[i * k + j] * std::log(p / q);
        }
        mean_kl += kl;
    }
    return std::exp(mean_kl / static_cast<double>(n));
}

PrecisionRecall precision_recall(const FeatureSet& real_f, const FeatureSet& syn_f,
                                 std::size_t k) {
    if (real_f.dim != syn_f.dim)
        throw ValidationError("feature dimensions disagree");
    if (k == 0 || k >= real_f.count || k >= syn_f.count)
        throw ValidationError("neighborhood size must be below both set sizes");

    std::vector<double> real_radius(real_f.count), syn_radius(syn_f.count);
    kernels::kth_neighbor_sq_dist(real_f.rows.data(), real_f.count, real_f.dim, k,
                                  real_radius.data());
    kernels::kth_neighbor_sq_dist(syn_f.rows.data(), syn_f.count, syn_f.dim, k,
                                  syn_radius.data());

    std::vector<std::size_t> nearest_real(syn_f.count);
    std::vector<double> dist_to_real(syn_f.count);
    kernels::nearest_neighbor(syn_f.rows.data(), syn_f.count, real_f.rows.data(),
                              real_f.count, real_f.dim, nearest_real.data(),
                              dist_to_real.data());
    std::vector<std::size_t> nearest_syn(real_f.count);
    std::vector<double> dist_to_syn(real_f.count);
    kernels::nearest_neighbor(real_f.rows.data(), real_f.count, syn_f.rows.data(),
                              syn_f.count, syn_f.dim, nearest_syn.data(),
                              dist_to_syn.data());

    PrecisionRecall pr;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < syn_f.count; ++i)
        if (dist_to_real[i] <= real_radius[nearest_real[i]]) ++hits;
    pr.precision = static_cast<double>(hits) / static_cast<double>(syn_f.count);

    hits = 0;
    for (std::size_t i = 0; i < real_f.count; ++i)
        if (dist_to_syn[i] <= syn_radius[nearest_syn[i]]) ++hits;
    pr.recall = static_cast<double>(hits) / static_cast<double>(real_f.count);
    return pr;
}

PrecisionRecall precision_recall_fixed(const FeatureSet& real_f,
                                       const FeatureSet& syn_f, double threshold) {
    if (real_f.dim != syn_f.dim)
        throw ValidationError("feature dimensions disagree");
    if (!(threshold >= 0.0)) throw ValidationError("threshold must be nonnegative");
    const double sq = threshold * threshold;

    std::vector<std::size_t> idx(std::max(real_f.count, syn_f.count));
    std::vector<double> dist(std::max(real_f.count, syn_f.count));

    PrecisionRecall pr;
    kernels::nearest_neighbor(syn_f.rows.data(), syn_f.count, real_f.rows.data(),
                              real_f.count, real_f.dim, idx.data(), dist.data());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < syn_f.count; ++i)
        if (dist[i] <= sq) ++hits;
    pr.precision = static_cast<double>(hits) / static_cast<double>(syn_f.count);

    kernels::nearest_neighbor(real_f.rows.data(), real_f.count, syn_f.rows.data(),
                              syn_f.count, syn_f.dim, idx.data(), dist.data());
    hits = 0;
    for (std::size_t i = 0; i < real_f.count; ++i)
        if (dist[i] <= sq) ++hits;
    pr.recall = static_cast<double>(hits) / static_cast<double>(real_f.count);
    return pr;
}

FeatureSet FeatureExtractor::extract(const Dataset& ds) const {
    std::vector<std::vector<double>> samples(ds.size());
    const Tensor& im = ds.images();
    const std::size_t d = ds.sample_dim();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        samples[i].resize(d);
        std::copy_n(im.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                    samples[i].begin());
    }
    return extract(samples);
}

FeatureSet FeatureExtractor::extract(const std::vector<std::vector<double>>& samples) const {
    if (samples.empty()) throw ValidationError("nothing to extract features from");
    FeatureSet fs;
    fs.count = samples.size();
    switch (kind) {
        case Kind::raw_pixels: {
            fs.dim = samples.front().size();
            fs.rows.resize(fs.count * fs.dim);
            for (std::size_t i = 0; i < fs.count; ++i)
                std::copy(samples[i].begin(), samples[i].end(),
                          fs.rows.begin() + static_cast<std::ptrdiff_t>(i * fs.dim));
            return fs;
        }
        case Kind::rff: {
            std::vector<double> flat(fs.count * map.input_dim);
            for (std::size_t i = 0; i < fs.count; ++i)
                std::copy(samples[i].begin(), samples[i].end(),
                          flat.begin() + static_cast<std::ptrdiff_t>(i * map.input_dim));
            fs.dim = map.feature_dim;
            fs.rows = rff_feature_matrix(flat.data(), fs.count, map);
            return fs;
        }
        case Kind::classifier_penultimate: {
            const auto first = penultimate_features(clf, samples.front());
            fs.dim = first.size();
            fs.rows.resize(fs.count * fs.dim);
            std::copy(first.begin(), first.end(), fs.rows.begin());
            const auto n = static_cast<std::ptrdiff_t>(fs.count);
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t i = 1; i < n; ++i) {
                const auto f = penultimate_features(clf, samples[static_cast<std::size_t>(i)]);
                std::copy(f.begin(), f.end(),
                          fs.rows.begin() + i * static_cast<std::ptrdiff_t>(fs.dim));
            }
            return fs;
        }
    }
    throw ValidationError("unknown extractor kind");
}

std::string FeatureExtractor::describe() const {
    switch (kind) {
        case Kind::raw_pixels:
            return "raw_pixels";
        case Kind::rff:
            return "rff(D=" + std::to_string(map.feature_dim) + ")";
        case Kind::classifier_penultimate:
            return "classifier_penultimate";
    }
    return "unknown";
}

FidelityReport evaluate_fidelity(const Dataset& real, const Dataset& synthetic,
                                 const FeatureExtractor& extractor,
                                 const ModelCheckpoint& probe_classifier,
                                 std::size_t knn_k) {
    const FeatureSet real_f = extractor.extract(real);
    const FeatureSet syn_f = extractor.extract(synthetic);

    const GaussianFit fit_real = fit_gaussian(real_f);
    const GaussianFit fit_syn = fit_gaussian(syn_f);

    FidelityReport report;
    report.fid = frechet_distance(fit_real, fit_syn);
    report.covariance_regularized = fit_real.regularized || fit_syn.regularized;
    report.extractor = extractor.describe();

    const std::size_t k_cls = probe_classifier.spec.output_dim();
    std::vector<double> probs(synthetic.size() * k_cls);
    for (std::size_t i = 0; i < synthetic.size(); ++i) {
        const auto p = forward(probe_classifier, synthetic.sample(i));
        std::copy(p.begin(), p.end(),
                  probs.begin() + static_cast<std::ptrdiff_t>(i * k_cls));
    }
    report.is_proxy = inception_score_proxy(probs, synthetic.size(), k_cls);

    const PrecisionRecall pr = precision_recall(real_f, syn_f, knn_k);
    report.precision = pr.precision;
    report.recall = pr.recall;
    return report;
}

} // namespace dpsynth
