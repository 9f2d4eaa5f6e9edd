#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace dpsynth {

/// Counter-based pseudo-random generator (Philox-2x64, 10 rounds).
///
/// A draw sequence is fully determined by (seed, stream); independent
/// streams may be consumed concurrently, but a single SeededRng instance
/// must not be shared across threads. Not a secure randomness source:
/// reproducibility of experiments is the design goal here, so do not use
/// this for anything where cryptographic noise quality matters.
class SeededRng {
public:
    SeededRng(uint64_t seed, uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    /// Number of 128-bit blocks consumed so far.
    uint64_t position() const { return counter_; }

    /// Derive an independent stream from the same seed.
    SeededRng fork(uint64_t stream) const { return SeededRng(seed_, stream); }

    uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1]; safe as a log argument.
    double uniform_pos();
    /// Uniform integer in [0, n).
    uint64_t uniform_below(uint64_t n);

    /// Standard normal via Box-Muller (pairs are drawn and one is cached).
    double normal();
    /// Laplace with scale b via inverse CDF.
    double laplace(double b);

    std::vector<double> normal_vector(std::size_t n);

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
    uint64_t buffered_ = 0;
    bool has_buffered_ = false;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// In-place Fisher-Yates shuffle, deterministic under the rng state.
void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng);

} // namespace dpsynth
