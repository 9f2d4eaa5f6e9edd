#include "dpsynth/rng.hpp"

#include <cmath>

namespace dpsynth {

namespace {

constexpr uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
constexpr uint64_t kPhiloxW = 0x9E3779B97F4A7C15ULL;

inline void philox_round(uint64_t& c0, uint64_t& c1, uint64_t key) {
    const __uint128_t prod = static_cast<__uint128_t>(kPhiloxM) * c0;
    const uint64_t hi = static_cast<uint64_t>(prod >> 64);
    const uint64_t lo = static_cast<uint64_t>(prod);
    c0 = hi ^ key ^ c1;
    c1 = lo;
}

// One 128-bit block: counter word c0, stream word c1, key = seed.
inline void philox_block(uint64_t counter, uint64_t stream, uint64_t seed,
                         uint64_t& out0, uint64_t& out1) {
    uint64_t c0 = counter, c1 = stream, key = seed;
    for (int r = 0; r < 10; ++r) {
        philox_round(c0, c1, key);
        key += kPhiloxW;
    }
    out0 = c0;
    out1 = c1;
}

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0; // 2^-53

} // namespace

uint64_t SeededRng::next_u64() {
    if (has_buffered_) {
        has_buffered_ = false;
        return buffered_;
    }
    uint64_t out0, out1;
    philox_block(counter_++, stream_, seed_, out0, out1);
    buffered_ = out1;
    has_buffered_ = true;
    return out0;
}

double SeededRng::uniform() {
    return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv;
}

double SeededRng::uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * kTwoPow53Inv;
}

uint64_t SeededRng::uniform_below(uint64_t n) {
    // Rejection sampling over the top of the range keeps it unbiased.
    const uint64_t limit = n * ((~uint64_t{0}) / n);
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double SeededRng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

double SeededRng::laplace(double b) {
    const double u = uniform() - 0.5;
    const double mag = std::log(1.0 - 2.0 * std::fabs(u));
    return (u < 0.0 ? b * mag : -b * mag);
}

std::vector<double> SeededRng::normal_vector(std::size_t n) {
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = normal();
    return z;
}

void shuffle_indices(std::vector<std::size_t>& idx, SeededRng& rng) {
    if (idx.empty()) return;
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_below(i + 1);
        std::swap(idx[i], idx[j]);
    }
}

} // namespace dpsynth
