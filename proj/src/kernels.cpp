#include "dpsynth/kernels.hpp"

#include <algorithm>
#include <limits>

#include "dpsynth/errors.hpp"

namespace dpsynth::kernels {

namespace {
Exec g_default = Exec::parallel;
}

Exec default_exec() { return g_default; }
void set_default_exec(Exec e) { g_default = e; }

void mean_rows(const double* rows, std::size_t n, std::size_t d,
               double* out, Exec exec) {
    if (n == 0) throw ValidationError("mean_rows over an empty set");
    const double inv = 1.0 / static_cast<double>(n);
    const auto nd = static_cast<std::ptrdiff_t>(d);
    // Per-column sums in row order: identical result in both modes.
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
    for (std::ptrdiff_t j = 0; j < nd; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            acc += rows[i * d + static_cast<std::size_t>(j)];
        out[j] = acc * inv;
    }
}

namespace {

inline void nearest_one(const double* q, const double* refs, std::size_t nr,
                        std::size_t d, std::size_t& best_idx, double& best_sq) {
    best_sq = std::numeric_limits<double>::infinity();
    best_idx = 0;
    for (std::size_t r = 0; r < nr; ++r) {
        double acc = 0.0;
        const double* row = refs + r * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = q[j] - row[j];
            acc += diff * diff;
        }
        if (acc < best_sq) {
            best_sq = acc;
            best_idx = r;
        }
    }
}

} // namespace

void nearest_neighbor(const double* queries, std::size_t nq,
                      const double* refs, std::size_t nr, std::size_t d,
                      std::size_t* out_idx, double* out_sq_dist, Exec exec) {
    if (nr == 0) throw ValidationError("nearest_neighbor with no references");
    const auto nqs = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < nqs; ++i) {
        std::size_t idx;
        double sq;
        nearest_one(queries + static_cast<std::size_t>(i) * d, refs, nr, d, idx, sq);
        out_idx[i] = idx;
        if (out_sq_dist) out_sq_dist[i] = sq;
    }
}

void kth_neighbor_sq_dist(const double* a, std::size_t n, std::size_t d,
                          std::size_t k, double* out, Exec exec) {
    if (k < 1 || k >= n)
        throw ValidationError("kth_neighbor_sq_dist requires 1 <= k < n");
    const auto ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < ns; ++i) {
        std::vector<double> dists;
        dists.reserve(n - 1);
        const double* qi = a + static_cast<std::size_t>(i) * d;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == static_cast<std::size_t>(i)) continue;
            double acc = 0.0;
            const double* row = a + r * d;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = qi[j] - row[j];
                acc += diff * diff;
            }
            dists.push_back(acc);
        }
        std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                         dists.end());
        out[i] = dists[k - 1];
    }
}

void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m, Exec exec) {
    const auto ns = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for if (exec == Exec::parallel) schedule(static)
    for (std::ptrdiff_t i = 0; i < ns; ++i) {
        double* ci = c + static_cast<std::size_t>(i) * m;
        std::fill(ci, ci + m, 0.0);
        const double* ai = a + static_cast<std::size_t>(i) * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
        }
    }
}

} // namespace dpsynth::kernels
