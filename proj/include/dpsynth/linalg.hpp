#pragma once

#include <cstddef>
#include <vector>

namespace dpsynth {

/// Dense symmetric matrix stored row-major.
struct SymmetricEigen {
    std::vector<double> eigenvalues;   // ascending
    std::vector<double> eigenvectors;  // column j is eigenvector j (row-major d x d)
};

/// Cyclic Jacobi eigendecomposition. The input must be symmetric within
/// 1e-9; throws ValidationError otherwise. Fine for the desk-scale feature
/// dimensions this project uses.
SymmetricEigen eigen_symmetric(const std::vector<double>& m, std::size_t d,
                               bool want_vectors = true);

/// B = V f(L) V^T for a symmetric PSD input, with negative eigenvalues
/// clamped to zero before f is applied.
std::vector<double> symmetric_function(const std::vector<double>& m, std::size_t d,
                                       double (*f)(double));

} // namespace dpsynth
