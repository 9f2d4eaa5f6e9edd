#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace dpsynth {

struct PrivacySpec {
    double epsilon = 0.0; // may be +inf for a non-private run
    double delta = 0.0;

    bool is_infinite() const;
    void validate() const;
};

/// Integer Renyi order grid used throughout. The integer-order subsampled
/// Gaussian bound is exact on this grid; fractional orders buy little at
/// desk-scale budgets.
inline constexpr std::size_t kOrderMin = 2;
inline constexpr std::size_t kOrderMax = 256;

/// alpha / (2 sigma^2), the Renyi divergence of one Gaussian release.
double rdp_gaussian(double sigma, double alpha);

/// Log-moment bound for one Poisson-subsampled Gaussian step at an integer
/// order. Equals rdp_gaussian when q = 1 and tends to 0 as q -> 0.
double rdp_subsampled_gaussian(double q, double sigma, std::size_t alpha);

/// Ordered, append-only record of privacy-consuming events. A sigma of 0
/// is admitted and composes to an infinite epsilon, so that non-private
/// (epsilon = inf) runs still leave their release structure on the record.
class AccountantLedger {
public:
    struct Event {
        enum class Kind { subsampled_gaussian, gaussian, pure };
        Kind kind;
        double q = 1.0;        // subsampled_gaussian only
        double sigma = 0.0;    // gaussian-type events
        std::size_t count = 0; // steps or releases
        double epsilon = 0.0;  // pure only
    };

    void add_subsampled_gaussian(double q, double sigma, std::size_t steps);
    void add_gaussian(double sigma, std::size_t releases = 1);
    void add_pure(double epsilon);

    const std::vector<Event>& events() const { return events_; }
    bool empty() const { return events_.empty(); }
    std::size_t size() const { return events_.size(); }

    /// Summed RDP across all Gaussian-type events at one order.
    double total_rdp(std::size_t alpha) const;
    bool has_rdp_events() const;

private:
    std::vector<Event> events_;
};

/// RDP composition plus conversion: eps = min over the order grid of
/// RDP(alpha) + log(1/delta)/(alpha - 1). Pure-eps events add on top after
/// the conversion. Throws ValidationError on an empty ledger.
double compose_and_convert(const AccountantLedger& ledger, double delta);

/// Binary search for the noise multiplier whose accounted epsilon lands in
/// [target - 1e-3, target] for `steps` subsampled-Gaussian steps at rate q,
/// optionally on top of already-committed events. Bracket [0.3, 1e4], at
/// most 80 iterations; throws CalibrationError when the window cannot be
/// reached inside the bracket.
double calibrate_sigma(const PrivacySpec& target, double q, std::size_t steps,
                       const AccountantLedger* base = nullptr);

/// Default failure probability 1/(N ln N); the natural log keeps
/// delta well below 1/N for every N >= 3.
double delta_default(std::size_t n);

/// Parallel composition over disjoint data: the worst of the guarantees.
double parallel_compose(double eps_a, double eps_b);

nlohmann::json ledger_to_json(const AccountantLedger& ledger);
AccountantLedger ledger_from_json(const nlohmann::json& j);

} // namespace dpsynth
