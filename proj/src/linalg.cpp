#include "dpsynth/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "dpsynth/errors.hpp"
#include "dpsynth/kernels.hpp"

namespace dpsynth {

SymmetricEigen eigen_symmetric(const std::vector<double>& m, std::size_t d,
                               bool want_vectors) {
    if (m.size() != d * d) throw ValidationError("matrix size does not match dimension");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::fabs(m[i * d + j] - m[j * d + i]) > 1e-9)
                throw ValidationError("eigen_symmetric expects a symmetric matrix");

    std::vector<double> a(m);
    std::vector<double> v;
    if (want_vectors) {
        v.assign(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    }

    // Cyclic Jacobi sweeps until the off-diagonal mass is negligible.
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
        if (off < 1e-24 * static_cast<double>(d * d)) break;

        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                if (want_vectors) {
                    for (std::size_t k = 0; k < d; ++k) {
                        const double vkp = v[k * d + p], vkq = v[k * d + q];
                        v[k * d + p] = c * vkp - s * vkq;
                        v[k * d + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    SymmetricEigen out;
    out.eigenvalues.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.eigenvalues[i] = a[i * d + i];

    std::vector<std::size_t> order(d);
    for (std::size_t i = 0; i < d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out.eigenvalues[x] < out.eigenvalues[y];
    });
    std::vector<double> sorted_vals(d);
    for (std::size_t i = 0; i < d; ++i) sorted_vals[i] = out.eigenvalues[order[i]];
    out.eigenvalues = std::move(sorted_vals);

    if (want_vectors) {
        out.eigenvectors.assign(d * d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < d; ++i)
                out.eigenvectors[i * d + j] = v[i * d + order[j]];
    }
    return out;
}

std::vector<double> symmetric_function(const std::vector<double>& m, std::size_t d,
                                       double (*f)(double)) {
    const SymmetricEigen eig = eigen_symmetric(m, d, /*want_vectors=*/true);
    std::vector<double> scaled(d * d); // V * f(L)
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            scaled[i * d + j] =
                eig.eigenvectors[i * d + j] * f(std::max(0.0, eig.eigenvalues[j]));
    // result = scaled * V^T
    std::vector<double> vt(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) vt[i * d + j] = eig.eigenvectors[j * d + i];
    std::vector<double> out(d * d);
    kernels::matmul(scaled.data(), vt.data(), out.data(), d, d, d);
    return out;
}

} // namespace dpsynth
