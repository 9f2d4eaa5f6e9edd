// Timing comparison between the serial reference kernels and their
// OpenMP-parallel counterparts. Build and run:
//   cmake --build build && ./build/bench/dpsynth_bench [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include <omp.h>

#include "dpsynth/embeddings.hpp"
#include "dpsynth/kernels.hpp"
#include "dpsynth/rng.hpp"
#include "dpsynth/tinynn.hpp"

using namespace dpsynth;
using kernels::Exec;

namespace {

double seconds_of(int repeats, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) body();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
               .count() /
           repeats;
}

std::vector<double> random_matrix(std::size_t n, std::size_t d, uint64_t seed) {
    SeededRng rng(seed, 0);
    std::vector<double> m(n * d);
    for (auto& v : m) v = rng.normal();
    return m;
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-26s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx\n", name,
                serial * 1e3, parallel * 1e3, serial / parallel);
}

} // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
    std::printf("threads: %d, repeats per timing: %d\n", omp_get_max_threads(),
                repeats);

    {
        const std::size_t n = 4000, d = 512;
        const auto rows = random_matrix(n, d, 1);
        std::vector<double> out(d);
        report("mean_rows 4000x512",
               seconds_of(repeats, [&] {
                   kernels::mean_rows(rows.data(), n, d, out.data(), Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   kernels::mean_rows(rows.data(), n, d, out.data(), Exec::parallel);
               }));
    }
    {
        const std::size_t nq = 1500, nr = 1500, d = 16;
        const auto q = random_matrix(nq, d, 2);
        const auto r = random_matrix(nr, d, 3);
        std::vector<std::size_t> idx(nq);
        std::vector<double> dist(nq);
        report("nearest_neighbor 1500^2",
               seconds_of(repeats, [&] {
                   kernels::nearest_neighbor(q.data(), nq, r.data(), nr, d, idx.data(),
                                             dist.data(), Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   kernels::nearest_neighbor(q.data(), nq, r.data(), nr, d, idx.data(),
                                             dist.data(), Exec::parallel);
               }));
    }
    {
        const std::size_t n = 800, d = 16, k = 3;
        const auto pts = random_matrix(n, d, 4);
        std::vector<double> out(n);
        report("kth_neighbor 800x16",
               seconds_of(repeats, [&] {
                   kernels::kth_neighbor_sq_dist(pts.data(), n, d, k, out.data(),
                                                 Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   kernels::kth_neighbor_sq_dist(pts.data(), n, d, k, out.data(),
                                                 Exec::parallel);
               }));
    }
    {
        const std::size_t n = 256;
        const auto a = random_matrix(n, n, 5);
        const auto b = random_matrix(n, n, 6);
        std::vector<double> c(n * n);
        report("matmul 256^3",
               seconds_of(repeats, [&] {
                   kernels::matmul(a.data(), b.data(), c.data(), n, n, n, Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   kernels::matmul(a.data(), b.data(), c.data(), n, n, n,
                                   Exec::parallel);
               }));
    }
    {
        SeededRng rng(7, 0);
        const RffMap map = RffMap::create(64, 512, 1.0, rng);
        const auto samples = random_matrix(1000, 64, 8);
        report("rff_features 1000x512",
               seconds_of(repeats, [&] {
                   rff_feature_matrix(samples.data(), 1000, map, Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   rff_feature_matrix(samples.data(), 1000, map, Exec::parallel);
               }));
    }
    {
        SeededRng rng(9, 0);
        MlpSpec spec{{64, 96, 96, 10}, Activation::relu, OutputHead::softmax};
        const ModelCheckpoint ckpt = init_checkpoint(spec, rng);
        std::vector<Example> batch(256);
        for (auto& ex : batch) {
            ex.x.resize(64);
            for (auto& v : ex.x) v = rng.uniform();
            ex.target.assign(10, 0.0);
            ex.target[rng.uniform_below(10)] = 1.0;
        }
        report("per_example_grads 256",
               seconds_of(repeats, [&] {
                   per_example_grads(ckpt, batch, Loss::cross_entropy, Exec::serial);
               }),
               seconds_of(repeats, [&] {
                   per_example_grads(ckpt, batch, Loss::cross_entropy, Exec::parallel);
               }));
    }
    return 0;
}
