#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "dpsynth/dataset.hpp"
#include "dpsynth/kernels.hpp"
#include "dpsynth/rng.hpp"

namespace dpsynth {

/// Random Fourier feature map for the Gaussian kernel. Frequencies are
/// drawn i.i.d. normal with scale 1/bandwidth; features come in cos/sin
/// pairs with no random phase, so every phi(x) has exact unit norm and the
/// mean-embedding sensitivity bounds hold without clipping.
struct RffMap {
    std::size_t input_dim = 0;
    std::size_t feature_dim = 0;       // D, even
    double bandwidth = 1.0;
    std::vector<double> frequencies;   // [D/2 x input_dim] row-major

    static RffMap create(std::size_t input_dim, std::size_t feature_dim,
                         double bandwidth, SeededRng& rng);
};

/// phi(x) = sqrt(2/D) (cos(w_j.x), sin(w_j.x))_{j=1..D/2}.
std::vector<double> rff_features(const std::vector<double>& x, const RffMap& map);

/// Feature matrix for n row-major samples; parallel over rows.
std::vector<double> rff_feature_matrix(const double* samples, std::size_t n,
                                       const RffMap& map,
                                       kernels::Exec exec = kernels::default_exec());

/// Wrapper keeping the feature matrix [n x D] together with its dims.
struct FeatureSet {
    std::size_t count = 0;
    std::size_t dim = 0;
    std::vector<double> rows;

    const double* row(std::size_t i) const { return rows.data() + i * dim; }
};

/// Feature sets persist as rank-2 [N x D] tensor files so the fidelity
/// pass can reuse them without recomputing the map.
void save_feature_set(const std::string& path, const FeatureSet& fs);
FeatureSet load_feature_set(const std::string& path);

FeatureSet rff_features_of(const Dataset& ds, const RffMap& map,
                           kernels::Exec exec = kernels::default_exec());

/// Feature-space mean with its contributing count; optionally class-
/// conditional means with per-class counts.
struct MeanEmbedding {
    std::vector<double> mu;      // length D
    std::size_t count = 0;       // m
    std::vector<std::vector<double>> per_class; // optional, K x D
    std::vector<std::size_t> class_counts;      // optional, length K

    bool has_classes() const { return !per_class.empty(); }
};

MeanEmbedding mean_embedding(const FeatureSet& features,
                             const std::vector<std::size_t>* labels = nullptr,
                             std::size_t num_classes = 0);
MeanEmbedding mean_embedding(const Dataset& ds, const RffMap& map,
                             bool class_conditional = false);

enum class NeighborNotion { replace_one, add_remove_unknown_m, add_remove_known_m };

/// Worst-case L2 change of the mean embedding across neighboring datasets:
/// 2/m for replace-one and add-or-remove with unknown m, 1/m when the
/// dataset size is public knowledge.
double sensitivity_mean_embedding(std::size_t m, NeighborNotion notion);

struct SensitivityWitness {
    double max_diff = 0.0;
    std::vector<std::size_t> dataset;   // alphabet indices, the larger/base set
    std::vector<std::size_t> neighbor;  // alphabet indices of the neighbor
};

/// Exhaustively enumerates neighboring dataset pairs over a small alphabet
/// of feature vectors (norm <= 1) and returns the largest mean-embedding
/// difference together with an achieving pair. Guards against enumerations
/// past ten million pairs with SizeError.
SensitivityWitness brute_force_sensitivity(
    const std::vector<std::vector<double>>& alphabet, std::size_t m,
    NeighborNotion notion);

/// Gaussian release of the mean embedding, calibrated by the notion's
/// sensitivity. The class-conditional variant perturbs each class mean
/// with its own per-class count.
MeanEmbedding noisy_mean_embedding(const Dataset& ds, const RffMap& map,
                                   double sigma, NeighborNotion notion,
                                   SeededRng& rng, bool class_conditional = false);

/// Plug-in MMD^2: squared distance between two mean embeddings.
double mmd2(const MeanEmbedding& a, const MeanEmbedding& b);
double mmd2(const FeatureSet& a, const FeatureSet& b);

/// Median pairwise distance over at most `cap` rows; the usual bandwidth
/// heuristic. Run this on public data only.
double median_heuristic_bandwidth(const FeatureSet& points, std::size_t cap = 500);
double median_heuristic_bandwidth(const Dataset& ds, std::size_t cap = 500);

} // namespace dpsynth
