#include <doctest.h>

#include <omp.h>

#include "dpsynth/embeddings.hpp"
#include "dpsynth/kernels.hpp"
#include "dpsynth/linalg.hpp"
#include "dpsynth/rng.hpp"

using namespace dpsynth;
using kernels::Exec;

// The parallel kernels must be bitwise identical to the serial reference
// for any thread count; these tests force several threads even on a single
// hardware core.

namespace {

struct ThreadGuard {
    int saved;
    explicit ThreadGuard(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
    ~ThreadGuard() { omp_set_num_threads(saved); }
};

std::vector<double> random_matrix(std::size_t n, std::size_t d, uint64_t seed) {
    SeededRng rng(seed, 0);
    std::vector<double> m(n * d);
    for (auto& v : m) v = rng.normal();
    return m;
}

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("mean_rows serial and parallel agree bitwise") {
    ThreadGuard guard(5);
    const auto rows = random_matrix(257, 33, 1);
    std::vector<double> a(33), b(33);
    kernels::mean_rows(rows.data(), 257, 33, a.data(), Exec::serial);
    kernels::mean_rows(rows.data(), 257, 33, b.data(), Exec::parallel);
    CHECK(a == b);
}

TEST_CASE("nearest_neighbor serial and parallel agree bitwise") {
    ThreadGuard guard(4);
    const auto queries = random_matrix(101, 7, 2);
    const auto refs = random_matrix(53, 7, 3);
    std::vector<std::size_t> ia(101), ib(101);
    std::vector<double> da(101), db(101);
    kernels::nearest_neighbor(queries.data(), 101, refs.data(), 53, 7, ia.data(),
                              da.data(), Exec::serial);
    kernels::nearest_neighbor(queries.data(), 101, refs.data(), 53, 7, ib.data(),
                              db.data(), Exec::parallel);
    CHECK(ia == ib);
    CHECK(da == db);
}

TEST_CASE("kth_neighbor_sq_dist serial and parallel agree bitwise") {
    ThreadGuard guard(3);
    const auto pts = random_matrix(64, 5, 4);
    std::vector<double> a(64), b(64);
    kernels::kth_neighbor_sq_dist(pts.data(), 64, 5, 3, a.data(), Exec::serial);
    kernels::kth_neighbor_sq_dist(pts.data(), 64, 5, 3, b.data(), Exec::parallel);
    CHECK(a == b);
}

TEST_CASE("matmul serial and parallel agree bitwise") {
    ThreadGuard guard(6);
    const auto ma = random_matrix(31, 17, 5);
    const auto mb = random_matrix(17, 23, 6);
    std::vector<double> ca(31 * 23), cb(31 * 23);
    kernels::matmul(ma.data(), mb.data(), ca.data(), 31, 17, 23, Exec::serial);
    kernels::matmul(ma.data(), mb.data(), cb.data(), 31, 17, 23, Exec::parallel);
    CHECK(ca == cb);
}

TEST_CASE("rff feature matrix serial and parallel agree bitwise") {
    ThreadGuard guard(4);
    SeededRng rng(7, 0);
    const RffMap map = RffMap::create(6, 48, 0.9, rng);
    const auto samples = random_matrix(97, 6, 8);
    const auto a = rff_feature_matrix(samples.data(), 97, map, Exec::serial);
    const auto b = rff_feature_matrix(samples.data(), 97, map, Exec::parallel);
    CHECK(a == b);
}

TEST_CASE("nearest neighbor ties break to the lowest reference index") {
    const std::vector<double> refs{1.0, 1.0, 3.0}; // refs 0 and 1 identical
    const std::vector<double> q{1.0};
    std::size_t idx = 99;
    kernels::nearest_neighbor(q.data(), 1, refs.data(), 3, 1, &idx, nullptr,
                              Exec::serial);
    CHECK(idx == 0);
}

TEST_CASE("jacobi eigensolver reconstructs a known spectrum") {
    // 2x2 with eigenvalues 1 and 3.
    const std::vector<double> m{2.0, 1.0, 1.0, 2.0};
    const SymmetricEigen eig = eigen_symmetric(m, 2);
    CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eig.eigenvalues[1] == doctest::Approx(3.0).epsilon(1e-12));

    // V diag(l) V^T reproduces the input for a random symmetric matrix.
    SeededRng rng(11, 0);
    const std::size_t d = 12;
    std::vector<double> s(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            const double v = rng.normal();
            s[i * d + j] = v;
            s[j * d + i] = v;
        }
    const SymmetricEigen e2 = eigen_symmetric(s, d);
    std::vector<double> recon(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                acc += e2.eigenvectors[i * d + k] * e2.eigenvalues[k] *
                       e2.eigenvectors[j * d + k];
            recon[i * d + j] = acc;
        }
    for (std::size_t i = 0; i < d * d; ++i)
        CHECK(recon[i] == doctest::Approx(s[i]).epsilon(1e-8));
}

} // TEST_SUITE
