#pragma once

#include <cstddef>
#include <vector>

namespace dpsynth::kernels {

/// Execution mode for the data-parallel kernels. Every parallel kernel is
/// written so its output is bitwise identical to the serial reference for
/// any thread count: parallel loops either write disjoint slots or reduce
/// per output coordinate in a fixed index order.
enum class Exec { serial, parallel };

/// Default mode used by the library call sites (parallel unless overridden
/// process-wide, e.g. for debugging).
Exec default_exec();
void set_default_exec(Exec e);

/// out[i] = column-wise mean of rows[i], rows given as an N x D row-major
/// buffer. Reduction runs per column in row-index order.
void mean_rows(const double* rows, std::size_t n, std::size_t d,
               double* out, Exec exec = default_exec());

/// For each query row, index of and squared distance to the nearest
/// reference row (L2). Ties resolve to the lowest reference index.
void nearest_neighbor(const double* queries, std::size_t nq,
                      const double* refs, std::size_t nr, std::size_t d,
                      std::size_t* out_idx, double* out_sq_dist,
                      Exec exec = default_exec());

/// Squared distance from row i of a to the k-th nearest *other* row of a
/// (k >= 1, self excluded). Used by the precision/recall radii.
void kth_neighbor_sq_dist(const double* a, std::size_t n, std::size_t d,
                          std::size_t k, double* out,
                          Exec exec = default_exec());

/// C = A (n x k) * B (k x m), row-major.
void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m,
            Exec exec = default_exec());

} // namespace dpsynth::kernels
