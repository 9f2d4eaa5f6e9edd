#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "dpsynth/rng.hpp"
#include "dpsynth/tensor.hpp"

namespace dpsynth {

struct SplitManifest {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    std::vector<std::size_t> test_idx;

    std::size_t n_train() const { return train_idx.size(); }
    std::size_t n_val() const { return val_idx.size(); }
    std::size_t n_test() const { return test_idx.size(); }

    /// Throws ValidationError unless the three index sets are pairwise
    /// disjoint and every index is below n.
    void validate(std::size_t n) const;
};

/// Labeled image collection with values in [0,1], labels in [0,K), and a
/// split manifest. Immutable after construction; safe to share across
/// threads. Trainers read pixels through images(), which bumps an optional
/// access counter so tests can assert how often the sensitive data was
/// touched.
class Dataset {
public:
    Dataset() = default;
    Dataset(Tensor images, std::vector<std::size_t> labels, std::size_t k,
            SplitManifest split = {});

    const Tensor& images() const {
        if (access_counter_) access_counter_->fetch_add(1, std::memory_order_relaxed);
        return images_;
    }
    const std::vector<std::size_t>& labels() const { return labels_; }
    std::size_t num_classes() const { return k_; }
    const SplitManifest& split() const { return split_; }

    std::size_t size() const { return images_.shape.empty() ? 0 : images_.dim(0); }
    std::size_t height() const { return images_.dim(1); }
    std::size_t width() const { return images_.dim(2); }
    std::size_t channels() const { return images_.dim(3); }
    /// Flattened per-sample dimensionality H*W*C.
    std::size_t sample_dim() const { return height() * width() * channels(); }

    /// One sample as a flat vector (counts as an image access).
    std::vector<double> sample(std::size_t i) const;

    void set_split(SplitManifest m);
    void install_access_counter(std::shared_ptr<std::atomic<uint64_t>> c) {
        access_counter_ = std::move(c);
    }

private:
    Tensor images_;                    // [N, H, W, C]
    std::vector<std::size_t> labels_;  // length N
    std::size_t k_ = 0;
    SplitManifest split_;
    std::shared_ptr<std::atomic<uint64_t>> access_counter_;
};

/// Loads a dataset directory holding images.tf, labels.tf and manifest.json.
Dataset load_dataset(const std::string& dir);

/// Writes the directory layout consumed by load_dataset.
void save_dataset(const std::string& dir, const Dataset& ds);

struct SplitFractions {
    double train = 0.0;
    double val = 0.0;
    double test = 0.0;
};

/// Deterministic shuffle-and-slice split. Sizes are floor(fraction*N); with
/// `stratified` the per-class counts stay within one of proportional.
Dataset split_dataset(const Dataset& ds, SplitFractions fractions, uint64_t seed,
                      bool stratified = false);

/// Nearest-neighbor resample to h x w using the index map
/// src = floor(dst * src_extent / dst_extent).
Dataset resize_nearest(const Dataset& ds, std::size_t h, std::size_t w);

/// Restrict to a subset of sample indices (splits are dropped).
Dataset take_subset(const Dataset& ds, const std::vector<std::size_t>& idx);

} // namespace dpsynth
