#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dpsynth/dataset.hpp"
#include "dpsynth/embeddings.hpp"
#include "dpsynth/tinynn.hpp"

namespace dpsynth {

/// Multivariate Gaussian fitted to a feature distribution.
struct GaussianFit {
    std::vector<double> mu;
    std::vector<double> sigma; // D x D, symmetric
    std::size_t dim = 0;
    bool regularized = false; // 1e-6 ridge added because D > N
};

/// Sample mean and covariance (denominator N-1), symmetrized. A small
/// ridge is added when the feature dimension exceeds the sample count so
/// the matrix square root stays defined.
GaussianFit fit_gaussian(const FeatureSet& features);

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), with the cross term
/// computed through the symmetric eigendecomposition of
/// Sa^{1/2} Sb Sa^{1/2}; eigenvalues above -1e-8 clamp to zero.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

/// exp(mean_n KL(p(y|x_n) || mean-row)). Rows must sum to one within 1e-6;
/// probabilities clamp at 1e-12 before any log.
double inception_score_proxy(const std::vector<double>& probs, std::size_t n,
                             std::size_t k);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// k-NN-radius rule: a synthetic point counts as covered when its nearest
/// real point lies within that real point's k-th-neighbor radius; recall
/// swaps the roles.
PrecisionRecall precision_recall(const FeatureSet& real_f, const FeatureSet& syn_f,
                                 std::size_t k);

/// Literal fixed-threshold variant of the description above.
PrecisionRecall precision_recall_fixed(const FeatureSet& real_f,
                                       const FeatureSet& syn_f, double threshold);

/// The desk-scale stand-ins for a large pretrained feature network.
struct FeatureExtractor {
    enum class Kind { raw_pixels, rff, classifier_penultimate };
    Kind kind = Kind::raw_pixels;
    RffMap map;           // rff only
    ModelCheckpoint clf;  // classifier_penultimate only

    FeatureSet extract(const Dataset& ds) const;
    FeatureSet extract(const std::vector<std::vector<double>>& samples) const;
    std::string describe() const;
};

struct FidelityReport {
    double fid = 0.0;
    double is_proxy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::string extractor;
    bool covariance_regularized = false;
};

/// Full fidelity pass: Frechet distance and precision/recall in the
/// extractor's feature space, IS-proxy from the classifier's probabilities.
FidelityReport evaluate_fidelity(const Dataset& real, const Dataset& synthetic,
                                 const FeatureExtractor& extractor,
                                 const ModelCheckpoint& probe_classifier,
                                 std::size_t knn_k = 3);

} // namespace dpsynth
