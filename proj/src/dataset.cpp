#include "dpsynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "dpsynth/errors.hpp"

namespace dpsynth {

namespace fs = std::filesystem;
using nlohmann::json;

void SplitManifest::validate(std::size_t n) const {
    std::unordered_set<std::size_t> seen;
    auto check = [&](const std::vector<std::size_t>& idx, const char* name) {
        for (std::size_t i : idx) {
            if (i >= n)
                throw ValidationError(std::string(name) + " index out of range");
            if (!seen.insert(i).second)
                throw ValidationError("split index sets are not disjoint");
        }
    };
    check(train_idx, "train");
    check(val_idx, "val");
    check(test_idx, "test");
}

Dataset::Dataset(Tensor images, std::vector<std::size_t> labels, std::size_t k,
                 SplitManifest split)
    : images_(std::move(images)), labels_(std::move(labels)), k_(k),
      split_(std::move(split)) {
    if (images_.rank() != 4)
        throw ValidationError("dataset images must have shape [N,H,W,C]");
    if (images_.dim(0) != labels_.size())
        throw ValidationError("label count does not match image count");
    for (double v : images_.data)
        if (v < 0.0 || v > 1.0)
            throw ValidationError("pixel value outside [0,1]");
    for (std::size_t y : labels_)
        if (y >= k_) throw ValidationError("label out of range [0,K)");
    split_.validate(images_.dim(0));
}

std::vector<double> Dataset::sample(std::size_t i) const {
    const Tensor& im = images();
    const std::size_t d = sample_dim();
    std::vector<double> x(d);
    std::copy_n(im.data.begin() + static_cast<std::ptrdiff_t>(i * d), d, x.begin());
    return x;
}

void Dataset::set_split(SplitManifest m) {
    m.validate(size());
    split_ = std::move(m);
}

namespace {

json indices_to_json(const std::vector<std::size_t>& idx) {
    json a = json::array();
    for (std::size_t i : idx) a.push_back(i);
    return a;
}

std::vector<std::size_t> indices_from_json(const json& a) {
    std::vector<std::size_t> idx;
    idx.reserve(a.size());
    for (const auto& v : a) idx.push_back(v.get<std::size_t>());
    return idx;
}

} // namespace

Dataset load_dataset(const std::string& dir) {
    const fs::path base(dir);
    Tensor images = read_tensor_file((base / "images.tf").string());
    if (images.rank() != 4) throw FormatError("images.tf must be rank 4");

    Tensor labels_t = read_tensor_file((base / "labels.tf").string());
    if (labels_t.rank() != 1) throw FormatError("labels.tf must be rank 1");

    std::ifstream mf(base / "manifest.json");
    if (!mf) throw FormatError("missing manifest.json in " + dir);
    json m = json::parse(mf);

    const auto k = m.at("K").get<std::size_t>();
    std::vector<std::size_t> labels(labels_t.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double v = labels_t.data[i];
        if (v < 0.0 || v != std::floor(v))
            throw ValidationError("labels must be nonnegative integers");
        labels[i] = static_cast<std::size_t>(v);
    }

    SplitManifest split;
    split.train_idx = indices_from_json(m.at("train_idx"));
    split.val_idx = indices_from_json(m.at("val_idx"));
    split.test_idx = indices_from_json(m.at("test_idx"));

    return Dataset(std::move(images), std::move(labels), k, std::move(split));
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    const fs::path base(dir);
    fs::create_directories(base);
    write_tensor_file((base / "images.tf").string(), ds.images(), Dtype::f32);

    Tensor labels_t({ds.labels().size()});
    for (std::size_t i = 0; i < ds.labels().size(); ++i)
        labels_t.data[i] = static_cast<double>(ds.labels()[i]);
    write_tensor_file((base / "labels.tf").string(), labels_t, Dtype::u8);

    json m;
    m["K"] = ds.num_classes();
    m["train_idx"] = indices_to_json(ds.split().train_idx);
    m["val_idx"] = indices_to_json(ds.split().val_idx);
    m["test_idx"] = indices_to_json(ds.split().test_idx);
    std::ofstream mf(base / "manifest.json");
    mf << m.dump(2) << "\n";
}

Dataset split_dataset(const Dataset& ds, SplitFractions f, uint64_t seed,
                      bool stratified) {
    if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || f.train + f.val + f.test > 1.0 + 1e-12)
        throw ValidationError("split fractions must be nonnegative and sum to at most 1");

    const std::size_t n = ds.size();
    SeededRng rng(seed, /*stream=*/0x5114ULL); // fixed stream for splitting
    SplitManifest out;

    auto slice = [](const std::vector<std::size_t>& pool, std::size_t from,
                    std::size_t count) {
        return std::vector<std::size_t>(pool.begin() + static_cast<std::ptrdiff_t>(from),
                                        pool.begin() + static_cast<std::ptrdiff_t>(from + count));
    };

    if (!stratified) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        shuffle_indices(pool, rng);
        const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
        const auto n_val = static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n)));
        const auto n_test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(n)));
        out.train_idx = slice(pool, 0, n_train);
        out.val_idx = slice(pool, n_train, n_val);
        out.test_idx = slice(pool, n_train + n_val, n_test);
    } else {
        std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
        for (std::size_t i = 0; i < n; ++i) by_class[ds.labels()[i]].push_back(i);
        for (auto& pool : by_class) {
            shuffle_indices(pool, rng);
            const auto nk = pool.size();
            const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(nk)));
            const auto n_val = static_cast<std::size_t>(std::floor(f.val * static_cast<double>(nk)));
            const auto n_test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(nk)));
            auto append = [&](std::vector<std::size_t>& dst, std::size_t from, std::size_t count) {
                dst.insert(dst.end(), pool.begin() + static_cast<std::ptrdiff_t>(from),
                           pool.begin() + static_cast<std::ptrdiff_t>(from + count));
            };
            append(out.train_idx, 0, n_train);
            append(out.val_idx, n_train, n_val);
            append(out.test_idx, n_train + n_val, n_test);
        }
    }

    Dataset result(ds.images(), ds.labels(), ds.num_classes(), std::move(out));
    return result;
}

Dataset resize_nearest(const Dataset& ds, std::size_t h, std::size_t w) {
    if (h < 1 || w < 1) throw ValidationError("resize target must be at least 1x1");
    const std::size_t n = ds.size(), sh = ds.height(), sw = ds.width(), c = ds.channels();
    const Tensor& src = ds.images();
    Tensor dst({n, h, w, c});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = (y * sh) / h;
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t sx = (x * sw) / w;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    dst.data[((i * h + y) * w + x) * c + ch] =
                        src.data[((i * sh + sy) * sw + sx) * c + ch];
                }
            }
        }
    }
    // Resampling reorders existing values only, so the split no longer
    // refers to resized content ambiguously; keep it as-is.
    return Dataset(std::move(dst), ds.labels(), ds.num_classes(), ds.split());
}

Dataset take_subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
    const std::size_t d = ds.sample_dim();
    const Tensor& src = ds.images();
    Tensor im({idx.size(), ds.height(), ds.width(), ds.channels()});
    std::vector<std::size_t> labels(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const std::size_t i = idx[j];
        if (i >= ds.size()) throw ValidationError("subset index out of range");
        std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                    im.data.begin() + static_cast<std::ptrdiff_t>(j * d));
        labels[j] = ds.labels()[i];
    }
    return Dataset(std::move(im), std::move(labels), ds.num_classes());
}

} // namespace dpsynth
