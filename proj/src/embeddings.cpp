#include "dpsynth/embeddings.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/mechanisms.hpp"

namespace dpsynth {

RffMap RffMap::create(std::size_t input_dim, std::size_t feature_dim,
                      double bandwidth, SeededRng& rng) {
    if (feature_dim == 0 || feature_dim % 2 != 0)
        throw ValidationError("feature dimension must be positive and even");
    if (!(bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");
    RffMap map;
    map.input_dim = input_dim;
    map.feature_dim = feature_dim;
    map.bandwidth = bandwidth;
    map.frequencies.resize((feature_dim / 2) * input_dim);
    const double scale = 1.0 / bandwidth;
    for (double& w : map.frequencies) w = scale * rng.normal();
    return map;
}

std::vector<double> rff_features(const std::vector<double>& x, const RffMap& map) {
    if (x.size() != map.input_dim)
        throw ValidationError("input dimension does not match the feature map");
    std::vector<double> out(map.feature_dim);
    const std::size_t half = map.feature_dim / 2;
    const double amp = std::sqrt(2.0 / static_cast<double>(map.feature_dim));
    for (std::size_t j = 0; j < half; ++j) {
        const double* w = map.frequencies.data() + j * map.input_dim;
        double dot = 0.0;
        for (std::size_t k = 0; k < map.input_dim; ++k) dot += w[k] * x[k];
        out[2 * j] = amp * std::cos(dot);
        out[2 * j + 1] = amp * std::sin(dot);
    }
    return out;
}

std::vector<double> rff_feature_matrix(const double* samples, std::size_t n,
                                       const RffMap& map, kernels::Exec exec) {
    const std::size_t d = map.input_dim, D = map.feature_dim, half = D / 2;
    const double amp = std::sqrt(2.0 / static_cast<double>(D));
    std::vector<double> out(n * D);
    const auto ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (exec == kernels::Exec::parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < ns; ++i) {
        const double* x = samples + static_cast<std::size_t>(i) * d;
        double* row = out.data() + static_cast<std::size_t>(i) * D;
        for (std::size_t j = 0; j < half; ++j) {
            const double* w = map.frequencies.data() + j * d;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += w[k] * x[k];
            row[2 * j] = amp * std::cos(dot);
            row[2 * j + 1] = amp * std::sin(dot);
        }
    }
    return out;
}

void save_feature_set(const std::string& path, const FeatureSet& fs) {
    Tensor t({fs.count, fs.dim});
    t.data = fs.rows;
    write_tensor_file(path, t, Dtype::f32);
}

FeatureSet load_feature_set(const std::string& path) {
    const Tensor t = read_tensor_file(path);
    if (t.rank() != 2) throw FormatError("feature set file must be rank 2");
    FeatureSet fs;
    fs.count = t.dim(0);
    fs.dim = t.dim(1);
    fs.rows = t.data;
    return fs;
}

FeatureSet rff_features_of(const Dataset& ds, const RffMap& map,
                           kernels::Exec exec) {
    FeatureSet fs;
    fs.count = ds.size();
    fs.dim = map.feature_dim;
    fs.rows = rff_feature_matrix(ds.images().data.data(), ds.size(), map, exec);
    return fs;
}

MeanEmbedding mean_embedding(const FeatureSet& features,
                             const std::vector<std::size_t>* labels,
                             std::size_t num_classes) {
    if (features.count == 0)
        throw ValidationError("mean embedding of an empty feature set");
    MeanEmbedding me;
    me.count = features.count;
    me.mu.resize(features.dim);
    kernels::mean_rows(features.rows.data(), features.count, features.dim,
                       me.mu.data());

    if (labels) {
        if (labels->size() != features.count)
            throw ValidationError("label count does not match feature rows");
        me.per_class.assign(num_classes, std::vector<double>(features.dim, 0.0));
        me.class_counts.assign(num_classes, 0);
        for (std::size_t i = 0; i < features.count; ++i) {
            const std::size_t y = (*labels)[i];
            if (y >= num_classes) throw ValidationError("label out of range");
            ++me.class_counts[y];
            const double* row = features.row(i);
            for (std::size_t j = 0; j < features.dim; ++j)
                me.per_class[y][j] += row[j];
        }
        for (std::size_t k = 0; k < num_classes; ++k)
            if (me.class_counts[k] > 0)
                for (double& v : me.per_class[k])
                    v /= static_cast<double>(me.class_counts[k]);
    }
    return me;
}

MeanEmbedding mean_embedding(const Dataset& ds, const RffMap& map,
                             bool class_conditional) {
    const FeatureSet fs = rff_features_of(ds, map);
    if (class_conditional)
        return mean_embedding(fs, &ds.labels(), ds.num_classes());
    return mean_embedding(fs);
}

double sensitivity_mean_embedding(std::size_t m, NeighborNotion notion) {
    if (m < 1) throw ValidationError("sensitivity needs at least one sample");
    const double md = static_cast<double>(m);
    switch (notion) {
        case NeighborNotion::replace_one:
        case NeighborNotion::add_remove_unknown_m:
            return 2.0 / md;
        case NeighborNotion::add_remove_known_m:
            return 1.0 / md;
    }
    throw ValidationError("unknown neighboring notion");
}

namespace {

std::vector<double> tuple_mean(const std::vector<std::vector<double>>& alphabet,
                               const std::vector<std::size_t>& tuple,
                               std::size_t denom, std::size_t dim) {
    std::vector<double> mu(dim, 0.0);
    for (std::size_t idx : tuple)
        for (std::size_t j = 0; j < dim; ++j) mu[j] += alphabet[idx][j];
    if (denom > 0)
        for (double& v : mu) v /= static_cast<double>(denom);
    return mu;
}

double diff_norm(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

} // namespace

SensitivityWitness brute_force_sensitivity(
    const std::vector<std::vector<double>>& alphabet, std::size_t m,
    NeighborNotion notion) {
    if (alphabet.empty() || m < 1)
        throw ValidationError("brute force needs a nonempty alphabet and m >= 1");
    const std::size_t dim = alphabet.front().size();
    for (const auto& v : alphabet) {
        if (v.size() != dim) throw ValidationError("alphabet dimensions disagree");
        if (l2_norm(v) > 1.0 + 1e-12)
            throw ValidationError("alphabet vectors must have norm at most 1");
    }

    const std::size_t a = alphabet.size();
    double tuples = 1.0;
    for (std::size_t i = 0; i < m; ++i) tuples *= static_cast<double>(a);
    const double pair_count = notion == NeighborNotion::replace_one
                                  ? tuples * static_cast<double>(m) * static_cast<double>(a)
                                  : tuples * static_cast<double>(m);
    if (pair_count > 1e7)
        throw SizeError("neighboring-pair enumeration would exceed ten million pairs");

    SensitivityWitness best;
    std::vector<std::size_t> tuple(m, 0);

    auto visit_all = [&](auto&& body) {
        while (true) {
            body(tuple);
            std::size_t pos = 0;
            while (pos < m && ++tuple[pos] == a) {
                tuple[pos] = 0;
                ++pos;
            }
            if (pos == m) break;
        }
    };

    if (notion == NeighborNotion::replace_one) {
        visit_all([&](const std::vector<std::size_t>& t) {
            const auto mu = tuple_mean(alphabet, t, m, dim);
            for (std::size_t i = 0; i < m; ++i) {
                std::vector<std::size_t> other(t);
                for (std::size_t b = 0; b < a; ++b) {
                    if (b == t[i]) continue;
                    other[i] = b;
                    const auto mu2 = tuple_mean(alphabet, other, m, dim);
                    const double diff = diff_norm(mu, mu2);
                    if (diff > best.max_diff) best = {diff, t, other};
                }
            }
        });
    } else {
        const bool known_m = notion == NeighborNotion::add_remove_known_m;
        visit_all([&](const std::vector<std::size_t>& t) {
            // t is the larger dataset of size m; neighbors drop one element.
            const auto mu = tuple_mean(alphabet, t, m, dim);
            for (std::size_t i = 0; i < m; ++i) {
                std::vector<std::size_t> smaller;
                smaller.reserve(m - 1);
                for (std::size_t j = 0; j < m; ++j)
                    if (j != i) smaller.push_back(t[j]);
                const std::size_t denom = known_m ? m : m - 1;
                const auto mu2 = tuple_mean(alphabet, smaller, denom, dim);
                const double diff = diff_norm(mu, mu2);
                if (diff > best.max_diff) best = {diff, t, smaller};
            }
        });
    }
    return best;
}

MeanEmbedding noisy_mean_embedding(const Dataset& ds, const RffMap& map,
                                   double sigma, NeighborNotion notion,
                                   SeededRng& rng, bool class_conditional) {
    MeanEmbedding me = mean_embedding(ds, map, class_conditional);
    if (sigma == 0.0) return me;

    if (class_conditional) {
        // Labels are treated as public class identities; each class mean is
        // perturbed with the sensitivity of its own count.
        for (std::size_t k = 0; k < me.per_class.size(); ++k) {
            if (me.class_counts[k] == 0) continue;
            const GaussianNoiseSpec spec{
                sensitivity_mean_embedding(me.class_counts[k], notion), sigma};
            me.per_class[k] = gaussian_mechanism(me.per_class[k], spec, rng);
        }
        // The global mean is post-processing of the noisy class means.
        std::fill(me.mu.begin(), me.mu.end(), 0.0);
        for (std::size_t k = 0; k < me.per_class.size(); ++k)
            for (std::size_t j = 0; j < me.mu.size(); ++j)
                me.mu[j] += static_cast<double>(me.class_counts[k]) * me.per_class[k][j];
        for (double& v : me.mu) v /= static_cast<double>(me.count);
    } else {
        const GaussianNoiseSpec spec{sensitivity_mean_embedding(me.count, notion),
                                     sigma};
        me.mu = gaussian_mechanism(me.mu, spec, rng);
    }
    return me;
}

double mmd2(const MeanEmbedding& a, const MeanEmbedding& b) {
    if (a.mu.size() != b.mu.size())
        throw ValidationError("embedding dimensions disagree");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.mu.size(); ++i)
        acc += (a.mu[i] - b.mu[i]) * (a.mu[i] - b.mu[i]);
    return acc;
}

double mmd2(const FeatureSet& a, const FeatureSet& b) {
    return mmd2(mean_embedding(a), mean_embedding(b));
}

double median_heuristic_bandwidth(const FeatureSet& points, std::size_t cap) {
    const std::size_t n = std::min(points.count, cap);
    if (n < 2) throw ValidationError("median heuristic needs at least two points");
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < points.dim; ++k) {
                const double diff = points.row(i)[k] - points.row(j)[k];
                acc += diff * diff;
            }
            dists.push_back(std::sqrt(acc));
        }
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                     dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

double median_heuristic_bandwidth(const Dataset& ds, std::size_t cap) {
    FeatureSet fs;
    fs.count = ds.size();
    fs.dim = ds.sample_dim();
    fs.rows = ds.images().data;
    return median_heuristic_bandwidth(fs, cap);
}

} // namespace dpsynth
