#include <doctest.h>

#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/fidelity.hpp"
#include "dpsynth/fixtures.hpp"
#include "dpsynth/rng.hpp"

using namespace dpsynth;

namespace {

FeatureSet rows_of(const std::vector<std::vector<double>>& rows) {
    FeatureSet fs;
    fs.count = rows.size();
    fs.dim = rows.front().size();
    fs.rows.resize(fs.count * fs.dim);
    for (std::size_t i = 0; i < fs.count; ++i)
        std::copy(rows[i].begin(), rows[i].end(),
                  fs.rows.begin() + static_cast<std::ptrdiff_t>(i * fs.dim));
    return fs;
}

FeatureSet random_features(std::size_t n, std::size_t d, uint64_t seed,
                           double shift = 0.0) {
    SeededRng rng(seed, 0);
    FeatureSet fs;
    fs.count = n;
    fs.dim = d;
    fs.rows.resize(n * d);
    for (double& v : fs.rows) v = rng.normal() + shift;
    return fs;
}

} // namespace

TEST_SUITE("fidelity") {

TEST_CASE("gaussian fit basics") {
    // Constant features: zero covariance.
    const auto constant = rows_of({{0.5, 1.0}, {0.5, 1.0}, {0.5, 1.0}});
    const GaussianFit cf = fit_gaussian(constant);
    for (double v : cf.sigma) CHECK(v == 0.0);

    // Hand covariance: points (0,0) and (2,0), mean (1,0), var 2 on axis 0.
    const auto pair = rows_of({{0.0, 0.0}, {2.0, 0.0}});
    const GaussianFit pf = fit_gaussian(pair);
    CHECK(pf.mu[0] == doctest::Approx(1.0));
    CHECK(pf.mu[1] == doctest::Approx(0.0));
    CHECK(pf.sigma[0] == doctest::Approx(2.0)); // (1-0)^2 + (2-1)^2 over N-1=1
    CHECK(pf.sigma[3] == doctest::Approx(0.0));

    // Row permutation invariance.
    const auto fwd = fit_gaussian(rows_of({{1.0, 2.0}, {3.0, -1.0}, {0.0, 0.5}}));
    const auto rev = fit_gaussian(rows_of({{0.0, 0.5}, {3.0, -1.0}, {1.0, 2.0}}));
    for (std::size_t i = 0; i < fwd.sigma.size(); ++i)
        CHECK(fwd.sigma[i] == doctest::Approx(rev.sigma[i]).epsilon(1e-12));

    FeatureSet single;
    single.count = 1;
    single.dim = 2;
    single.rows = {1.0, 2.0};
    CHECK_THROWS_AS(fit_gaussian(single), ValidationError);
}

TEST_CASE("frechet distance closed forms") {
    const auto a = fit_gaussian(random_features(400, 6, 1));
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-8));

    // Univariate closed form: (0, 1) vs (3, 4) -> 9 + 1 + 4 - 2*2 = 10.
    GaussianFit u1, u2;
    u1.dim = u2.dim = 1;
    u1.mu = {0.0};
    u1.sigma = {1.0};
    u2.mu = {3.0};
    u2.sigma = {4.0};
    CHECK(frechet_distance(u1, u2) == doctest::Approx(10.0).epsilon(1e-10));

    const auto b = fit_gaussian(random_features(400, 6, 2, 0.7));
    const double ab = frechet_distance(a, b);
    const double ba = frechet_distance(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-8));
    CHECK(ab > 0.0);

    GaussianFit wrong;
    wrong.dim = 3;
    wrong.mu = {0, 0, 0};
    wrong.sigma.assign(9, 0.0);
    CHECK_THROWS_AS(frechet_distance(a, wrong), ValidationError);
}

TEST_CASE("inception score proxy closed forms") {
    // All rows identical: IS = 1.
    std::vector<double> same{0.25, 0.75, 0.25, 0.75, 0.25, 0.75};
    CHECK(inception_score_proxy(same, 3, 2) == doctest::Approx(1.0).epsilon(1e-12));

    // One-hot rows covering K classes equally: IS = K.
    const std::size_t k = 5;
    std::vector<double> onehot(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) onehot[i * k + i] = 1.0;
    CHECK(inception_score_proxy(onehot, k, k) == doctest::Approx(5.0).epsilon(1e-6));

    // Always within [1, K]; invariant to row permutation.
    SeededRng rng(3, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4 + rng.uniform_below(20), kk = 2 + rng.uniform_below(6);
        std::vector<double> p(n * kk);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < kk; ++j) {
                p[i * kk + j] = 0.01 + rng.uniform();
                sum += p[i * kk + j];
            }
            for (std::size_t j = 0; j < kk; ++j) p[i * kk + j] /= sum;
        }
        const double is = inception_score_proxy(p, n, kk);
        CHECK(is >= 1.0 - 1e-9);
        CHECK(is <= static_cast<double>(kk) + 1e-9);

        std::vector<double> swapped(p);
        for (std::size_t j = 0; j < kk; ++j)
            std::swap(swapped[j], swapped[(n - 1) * kk + j]);
        CHECK(inception_score_proxy(swapped, n, kk) == doctest::Approx(is).epsilon(1e-12));
    }

    std::vector<double> bad{0.5, 0.2, 0.5, 0.5};
    CHECK_THROWS_AS(inception_score_proxy(bad, 2, 2), ValidationError);
}

TEST_CASE("precision and recall on controlled fixtures") {
    // Identical sets cover themselves completely.
    const auto self = random_features(30, 2, 4);
    const PrecisionRecall same = precision_recall(self, self, 3);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);

    // A far-away synthetic cluster scores zero precision.
    const auto real_f = random_features(25, 2, 5);
    const auto far_f = random_features(25, 2, 6, 100.0);
    const PrecisionRecall far = precision_recall(real_f, far_f, 3);
    CHECK(far.precision == 0.0);
    CHECK(far.recall == 0.0);

    CHECK_THROWS_AS(precision_recall(real_f, far_f, 25), ValidationError);
}

TEST_CASE("precision/recall matches the exhaustive double-loop oracle") {
    const auto real_f = random_features(20, 2, 7);
    const auto syn_f = random_features(20, 2, 8, 0.5);
    const std::size_t k = 3;
    const PrecisionRecall ours = precision_recall(real_f, syn_f, k);

    // Brute-force oracle, quadratic everything.
    auto sq_dist = [&](const FeatureSet& a, std::size_t i, const FeatureSet& b,
                       std::size_t j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < a.dim; ++c) {
            const double diff = a.rows[i * a.dim + c] - b.rows[j * b.dim + c];
            acc += diff * diff;
        }
        return acc;
    };
    auto radius = [&](const FeatureSet& s, std::size_t i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < s.count; ++j)
            if (j != i) d.push_back(sq_dist(s, i, s, j));
        std::sort(d.begin(), d.end());
        return d[k - 1];
    };
    std::size_t hits = 0;
    for (std::size_t i = 0; i < syn_f.count; ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t j = 0; j < real_f.count; ++j) {
            const double d = sq_dist(syn_f, i, real_f, j);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best_d <= radius(real_f, best)) ++hits;
    }
    const double precision_oracle = static_cast<double>(hits) / 20.0;
    hits = 0;
    for (std::size_t i = 0; i < real_f.count; ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t j = 0; j < syn_f.count; ++j) {
            const double d = sq_dist(real_f, i, syn_f, j);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (best_d <= radius(syn_f, best)) ++hits;
    }
    const double recall_oracle = static_cast<double>(hits) / 20.0;

    CHECK(ours.precision == precision_oracle);
    CHECK(ours.recall == recall_oracle);
}

TEST_CASE("precision/recall is invariant under a joint isometry") {
    const auto real_f = random_features(30, 2, 9);
    const auto syn_f = random_features(28, 2, 10, 0.3);
    const PrecisionRecall base = precision_recall(real_f, syn_f, 3);

    // Rotate both sets by the same angle and translate.
    const double c = std::cos(0.7), s = std::sin(0.7);
    auto transform = [&](FeatureSet fs) {
        for (std::size_t i = 0; i < fs.count; ++i) {
            const double x = fs.rows[i * 2], y = fs.rows[i * 2 + 1];
            fs.rows[i * 2] = c * x - s * y + 5.0;
            fs.rows[i * 2 + 1] = s * x + c * y - 2.0;
        }
        return fs;
    };
    const PrecisionRecall moved = precision_recall(transform(real_f), transform(syn_f), 3);
    CHECK(moved.precision == doctest::Approx(base.precision).epsilon(1e-12));
    CHECK(moved.recall == doctest::Approx(base.recall).epsilon(1e-12));
}

TEST_CASE("fixed-threshold mode behaves at the extremes") {
    const auto real_f = random_features(15, 2, 11);
    const PrecisionRecall all = precision_recall_fixed(real_f, real_f, 0.0);
    CHECK(all.precision == 1.0); // zero distance to itself
    const auto far_f = random_features(15, 2, 12, 50.0);
    const PrecisionRecall none = precision_recall_fixed(real_f, far_f, 1.0);
    CHECK(none.precision == 0.0);
    const PrecisionRecall wide = precision_recall_fixed(real_f, far_f, 1e6);
    CHECK(wide.precision == 1.0);
    CHECK(wide.recall == 1.0);
}

TEST_CASE("full fidelity pass emits every metric") {
    const Dataset real = make_toy_digits(150, 20);
    const Dataset syn = make_toy_digits(150, 21);

    SeededRng rng(22, 0);
    MlpSpec clf_spec{{64, 32, 10}, Activation::relu, OutputHead::softmax};
    const ModelCheckpoint clf = init_checkpoint(clf_spec, rng);

    FeatureExtractor raw;
    raw.kind = FeatureExtractor::Kind::raw_pixels;
    const FidelityReport rep = evaluate_fidelity(real, syn, raw, clf, 3);
    CHECK(rep.fid >= 0.0);
    CHECK(rep.fid < 5.0); // same generator, same distribution
    CHECK(rep.is_proxy >= 1.0);
    CHECK(rep.precision > 0.5);
    CHECK(rep.recall > 0.5);
    CHECK(rep.extractor == "raw_pixels");

    // The classifier-penultimate extractor runs end to end too.
    FeatureExtractor penult;
    penult.kind = FeatureExtractor::Kind::classifier_penultimate;
    penult.clf = clf;
    const FidelityReport rep2 = evaluate_fidelity(real, syn, penult, clf, 3);
    CHECK(rep2.extractor == "classifier_penultimate");
    CHECK(rep2.fid >= 0.0);
}

} // TEST_SUITE
