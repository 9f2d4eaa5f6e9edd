#include <doctest.h>

#include <cmath>
#include <limits>

#include "dpsynth/accountant.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/rng.hpp"

using namespace dpsynth;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Test-local quadrature oracle for the subsampled Gaussian log-moment:
// integrates E_{z~N(0,s^2)}[((1-q) + q e^{(2z-1)/(2s^2)})^alpha] by Simpson
// in log space. Independent of the binomial-moment implementation.
double quadrature_rdp(double q, double sigma, std::size_t alpha) {
    const double a = static_cast<double>(alpha);
    const double s2 = sigma * sigma;
    auto log_mix = [&](double z) {
        const double g = (2.0 * z - 1.0) / (2.0 * s2);
        // log((1-q) + q e^g), stable for either sign of g
        if (g > 0.0) return g + std::log(q + (1.0 - q) * std::exp(-g));
        return std::log((1.0 - q) + q * std::exp(g));
    };
    const double lo = -40.0 * sigma - 10.0;
    const double hi = a + 40.0 * sigma + 10.0;
    const std::size_t n = 1 << 18; // even interval count
    const double h = (hi - lo) / static_cast<double>(n);
    const double log_norm = -0.5 * std::log(2.0 * M_PI * s2);

    double max_term = -kInf;
    std::vector<double> terms(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        const double z = lo + h * static_cast<double>(i);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        terms[i] = std::log(w) + log_norm - z * z / (2.0 * s2) + a * log_mix(z);
        max_term = std::max(max_term, terms[i]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    const double log_integral = max_term + std::log(acc) + std::log(h / 3.0);
    return log_integral / (a - 1.0);
}

} // namespace

TEST_SUITE("accountant") {

TEST_CASE("rdp_gaussian closed form") {
    CHECK(rdp_gaussian(1.0, 2.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rdp_gaussian(2.0, 2.0) == doctest::Approx(0.25).epsilon(1e-15));
    // Linear in alpha at fixed sigma.
    for (double alpha = 2.0; alpha <= 64.0; alpha *= 2.0)
        CHECK(rdp_gaussian(3.0, alpha) ==
              doctest::Approx(alpha * rdp_gaussian(3.0, 1.0 + 1e-9) / (1.0 + 1e-9))
                  .epsilon(1e-6));
    CHECK_THROWS_AS(rdp_gaussian(0.0, 2.0), ValidationError);
    CHECK_THROWS_AS(rdp_gaussian(1.0, 1.0), ValidationError);
}

TEST_CASE("subsampled RDP at q=1 equals the Gaussian closed form on the whole grid") {
    for (double sigma : {0.5, 1.0, 2.0, 7.5}) {
        for (std::size_t alpha = kOrderMin; alpha <= kOrderMax; ++alpha) {
            const double a = rdp_subsampled_gaussian(1.0, sigma, alpha);
            const double b = rdp_gaussian(sigma, static_cast<double>(alpha));
            CHECK(std::fabs(a - b) < 1e-9);
        }
    }
}

TEST_CASE("subsampled RDP vanishes as q goes to zero") {
    CHECK(rdp_subsampled_gaussian(1e-9, 1.0, 8) < 1e-12);
    CHECK(rdp_subsampled_gaussian(1e-6, 2.0, 32) < 1e-6);
}

TEST_CASE("subsampled RDP matches the quadrature oracle at q=0.01") {
    const double ours = rdp_subsampled_gaussian(0.01, 1.0, 8);
    const double oracle = quadrature_rdp(0.01, 1.0, 8);
    CHECK(std::fabs(ours - oracle) / oracle < 1e-6);
}

TEST_CASE("subsampled RDP is monotone nondecreasing in q") {
    for (std::size_t alpha : {2ul, 8ul, 64ul, 256ul}) {
        double prev = 0.0;
        for (double q = 0.05; q <= 1.0; q += 0.05) {
            const double v = rdp_subsampled_gaussian(std::min(q, 1.0), 1.2, alpha);
            CHECK(v >= prev - 1e-12);
            prev = v;
        }
    }
}

TEST_CASE("single Gaussian release at sigma=1 converts to about 5.30") {
    AccountantLedger ledger;
    ledger.add_gaussian(1.0, 1);
    const double eps = compose_and_convert(ledger, 1e-5);
    CHECK(eps == doctest::Approx(5.30).epsilon(0.002)); // within +-0.01

    // Dense grid-search oracle over fractional alpha.
    double oracle = kInf;
    for (double alpha = 1.001; alpha <= 512.0; alpha += 0.001)
        oracle = std::min(oracle, alpha / 2.0 + std::log(1e5) / (alpha - 1.0));
    CHECK(oracle == doctest::Approx(5.30).epsilon(0.002));
    CHECK(std::fabs(eps - oracle) < 0.01);
}

TEST_CASE("two identical events exactly double the per-order RDP") {
    AccountantLedger one, two;
    one.add_subsampled_gaussian(0.1, 1.5, 10);
    two.add_subsampled_gaussian(0.1, 1.5, 10);
    two.add_subsampled_gaussian(0.1, 1.5, 10);
    for (std::size_t alpha = kOrderMin; alpha <= kOrderMax; alpha += 7)
        CHECK(two.total_rdp(alpha) == doctest::Approx(2.0 * one.total_rdp(alpha)).epsilon(1e-12));
}

TEST_CASE("epsilon decreases in sigma, grows with steps, q and event count") {
    SeededRng rng(31, 0);
    for (int trial = 0; trial < 25; ++trial) {
        const double q = 0.01 + 0.98 * rng.uniform();
        const double sigma = 0.8 + 4.0 * rng.uniform();
        const auto steps = static_cast<std::size_t>(1 + rng.uniform_below(500));
        const double delta = 1e-6;

        auto eps_of = [&](double s, std::size_t t, double qq, std::size_t copies) {
            AccountantLedger ledger;
            for (std::size_t i = 0; i < copies; ++i)
                ledger.add_subsampled_gaussian(qq, s, t);
            return compose_and_convert(ledger, delta);
        };

        const double base = eps_of(sigma, steps, q, 1);
        CHECK(eps_of(sigma * 1.3, steps, q, 1) < base);
        CHECK(eps_of(sigma, steps + 50, q, 1) >= base);
        CHECK(eps_of(sigma, steps, std::min(1.0, q * 1.2), 1) >= base - 1e-12);
        CHECK(eps_of(sigma, steps, q, 2) >= base);
    }
}

TEST_CASE("pure events add after conversion and alone convert to their sum") {
    AccountantLedger pure_only;
    pure_only.add_pure(0.7);
    pure_only.add_pure(0.3);
    CHECK(compose_and_convert(pure_only, 1e-5) == doctest::Approx(1.0).epsilon(1e-12));

    AccountantLedger mixed;
    mixed.add_gaussian(1.0, 1);
    mixed.add_pure(0.5);
    AccountantLedger gaussian_only;
    gaussian_only.add_gaussian(1.0, 1);
    CHECK(compose_and_convert(mixed, 1e-5) ==
          doctest::Approx(compose_and_convert(gaussian_only, 1e-5) + 0.5).epsilon(1e-12));
}

TEST_CASE("empty ledger and bad delta are validation errors") {
    AccountantLedger empty;
    CHECK_THROWS_AS(compose_and_convert(empty, 1e-5), ValidationError);
    AccountantLedger l;
    l.add_gaussian(1.0, 1);
    CHECK_THROWS_AS(compose_and_convert(l, 0.0), ValidationError);
    CHECK_THROWS_AS(compose_and_convert(l, 1.0), ValidationError);
}

TEST_CASE("sigma zero composes to an infinite epsilon") {
    AccountantLedger l;
    l.add_gaussian(0.0, 1);
    CHECK(std::isinf(compose_and_convert(l, 1e-5)));
}

TEST_CASE("calibrate then account lands in the target window") {
    SeededRng rng(17, 0);
    for (int trial = 0; trial < 30; ++trial) {
        const PrivacySpec target{0.3 + 9.7 * rng.uniform(),
                                 std::pow(10.0, -7.0 + 3.0 * rng.uniform())};
        const double q = 0.01 + 0.99 * rng.uniform();
        const auto steps = static_cast<std::size_t>(1 + rng.uniform_below(3000));
        const double sigma = calibrate_sigma(target, q, steps);
        AccountantLedger ledger;
        ledger.add_subsampled_gaussian(q, sigma, steps);
        const double eps = compose_and_convert(ledger, target.delta);
        CHECK(eps <= target.epsilon);
        CHECK(eps >= target.epsilon - 1e-3);
    }
}

TEST_CASE("larger step count needs at least as much noise") {
    const PrivacySpec target{2.0, 1e-6};
    double prev = 0.0;
    for (std::size_t steps : {10ul, 50ul, 250ul, 1250ul}) {
        const double sigma = calibrate_sigma(target, 0.05, steps);
        CHECK(sigma >= prev);
        prev = sigma;
    }
}

TEST_CASE("the desk-scale training tuple calibrates under its budget") {
    // q and T follow the benchmark's published batch size 4096 and 2196
    // iterations on a 55000-image training split.
    const std::size_t n = 55000;
    const PrivacySpec target{10.0, delta_default(n)};
    const double q = 4096.0 / 55000.0;
    const double sigma = calibrate_sigma(target, q, 2196);
    AccountantLedger ledger;
    ledger.add_subsampled_gaussian(q, sigma, 2196);
    CHECK(compose_and_convert(ledger, target.delta) <= 10.0);
}

TEST_CASE("delta default rule") {
    // Direct evaluation of 1/(N ln N) at N=55000.
    CHECK(delta_default(55000) == doctest::Approx(1.66575e-6).epsilon(1e-4));
    CHECK_THROWS_AS(delta_default(2), ValidationError);
    CHECK(delta_default(3) > 0.0);
    for (std::size_t n : {3ul, 10ul, 150ul, 1000ul, 55000ul}) {
        CHECK(delta_default(n) < 1.0 / static_cast<double>(n));
        if (n >= 150)
            CHECK(delta_default(n) * static_cast<double>(n) < 0.2);
    }
}

TEST_CASE("parallel composition takes the worst guarantee") {
    CHECK(parallel_compose(1.0, 1.0) == 1.0);
    CHECK(parallel_compose(1.0, 2.0) == 2.0);
    CHECK(parallel_compose(2.0, 1.0) == parallel_compose(1.0, 2.0));
    CHECK_THROWS_AS(parallel_compose(0.0, 1.0), ValidationError);
}

TEST_CASE("ledger JSON round-trip") {
    AccountantLedger l;
    l.add_subsampled_gaussian(0.07, 1.9, 2196);
    l.add_gaussian(4.0, 2);
    l.add_pure(1.0);
    const AccountantLedger back = ledger_from_json(ledger_to_json(l));
    REQUIRE(back.size() == 3);
    CHECK(compose_and_convert(back, 1e-6) ==
          doctest::Approx(compose_and_convert(l, 1e-6)).epsilon(1e-15));
}

} // TEST_SUITE
