#include "dpsynth/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpsynth/errors.hpp"

namespace dpsynth {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

bool PrivacySpec::is_infinite() const { return std::isinf(epsilon); }

void PrivacySpec::validate() const {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0) && !is_infinite())
        throw ValidationError("delta must lie in (0,1)");
}

double rdp_gaussian(double sigma, double alpha) {
    if (!(sigma > 0.0)) throw ValidationError("rdp_gaussian requires sigma > 0");
    if (!(alpha > 1.0)) throw ValidationError("rdp_gaussian requires alpha > 1");
    return alpha / (2.0 * sigma * sigma);
}

double rdp_subsampled_gaussian(double q, double sigma, std::size_t alpha) {
    if (!(q > 0.0 && q <= 1.0))
        throw ValidationError("sampling rate must lie in (0,1]");
    if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
    if (alpha < 2) throw ValidationError("integer order must be at least 2");

    if (q == 1.0) return rdp_gaussian(sigma, static_cast<double>(alpha));

    // log of sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp(k(k-1)/(2 sigma^2)),
    // evaluated with log-sum-exp so large orders stay finite.
    const double a = static_cast<double>(alpha);
    const double log_q = std::log(q);
    const double log_1mq = std::log1p(-q);
    const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);

    double max_term = -kInf;
    std::vector<double> terms(alpha + 1);
    for (std::size_t k = 0; k <= alpha; ++k) {
        const double kd = static_cast<double>(k);
        const double log_binom =
            std::lgamma(a + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(a - kd + 1.0);
        terms[k] = log_binom + (a - kd) * log_1mq + kd * log_q +
                   kd * (kd - 1.0) * inv_2s2;
        max_term = std::max(max_term, terms[k]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    const double log_moment = max_term + std::log(acc);
    return std::max(0.0, log_moment / (a - 1.0));
}

void AccountantLedger::add_subsampled_gaussian(double q, double sigma,
                                               std::size_t steps) {
    if (!(q > 0.0 && q <= 1.0))
        throw ValidationError("sampling rate must lie in (0,1]");
    if (sigma < 0.0) throw ValidationError("sigma must be nonnegative");
    events_.push_back({Event::Kind::subsampled_gaussian, q, sigma, steps, 0.0});
}

void AccountantLedger::add_gaussian(double sigma, std::size_t releases) {
    if (sigma < 0.0) throw ValidationError("sigma must be nonnegative");
    events_.push_back({Event::Kind::gaussian, 1.0, sigma, releases, 0.0});
}

void AccountantLedger::add_pure(double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("pure-DP epsilon must be positive");
    events_.push_back({Event::Kind::pure, 1.0, 0.0, 1, epsilon});
}

bool AccountantLedger::has_rdp_events() const {
    for (const auto& e : events_)
        if (e.kind != Event::Kind::pure && e.count > 0) return true;
    return false;
}

double AccountantLedger::total_rdp(std::size_t alpha) const {
    double acc = 0.0;
    for (const auto& e : events_) {
        if (e.kind == Event::Kind::pure || e.count == 0) continue;
        if (e.sigma == 0.0) return kInf;
        const double per_step = e.kind == Event::Kind::subsampled_gaussian
                                    ? rdp_subsampled_gaussian(e.q, e.sigma, alpha)
                                    : rdp_gaussian(e.sigma, static_cast<double>(alpha));
        acc += static_cast<double>(e.count) * per_step;
    }
    return acc;
}

double compose_and_convert(const AccountantLedger& ledger, double delta) {
    if (ledger.empty()) throw ValidationError("cannot convert an empty ledger");
    if (!(delta > 0.0 && delta < 1.0))
        throw ValidationError("delta must lie in (0,1)");

    double pure = 0.0;
    for (const auto& e : ledger.events())
        if (e.kind == AccountantLedger::Event::Kind::pure) pure += e.epsilon;

    if (!ledger.has_rdp_events()) return pure;

    const double log_inv_delta = std::log(1.0 / delta);
    double best = kInf;
    for (std::size_t alpha = kOrderMin; alpha <= kOrderMax; ++alpha) {
        const double rdp = ledger.total_rdp(alpha);
        if (std::isinf(rdp)) return kInf;
        best = std::min(best, rdp + log_inv_delta / (static_cast<double>(alpha) - 1.0));
    }
    return pure + best;
}

double calibrate_sigma(const PrivacySpec& target, double q, std::size_t steps,
                       const AccountantLedger* base) {
    target.validate();
    if (target.is_infinite()) return 0.0;
    if (steps < 1) throw ValidationError("calibration needs at least one step");

    constexpr double kLo = 0.3, kHi = 1e4, kWindow = 1e-3;
    constexpr int kMaxIter = 80;

    auto accounted = [&](double sigma) {
        AccountantLedger ledger;
        if (base)
            for (const auto& e : base->events())
                switch (e.kind) {
                    case AccountantLedger::Event::Kind::subsampled_gaussian:
                        ledger.add_subsampled_gaussian(e.q, e.sigma, e.count);
                        break;
                    case AccountantLedger::Event::Kind::gaussian:
                        ledger.add_gaussian(e.sigma, e.count);
                        break;
                    case AccountantLedger::Event::Kind::pure:
                        ledger.add_pure(e.epsilon);
                        break;
                }
        ledger.add_subsampled_gaussian(q, sigma, steps);
        return compose_and_convert(ledger, target.delta);
    };

    double lo = kLo, hi = kHi;
    const double eps_lo = accounted(lo);
    if (eps_lo <= target.epsilon) {
        if (eps_lo >= target.epsilon - kWindow) return lo;
        throw CalibrationError("target epsilon unattainably loose inside the sigma bracket");
    }
    if (accounted(hi) > target.epsilon)
        throw CalibrationError("target epsilon unattainable even at the top of the sigma bracket");

    for (int it = 0; it < kMaxIter; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double eps = accounted(mid);
        if (eps > target.epsilon) {
            lo = mid;
        } else {
            hi = mid;
            if (eps >= target.epsilon - kWindow) return mid;
        }
    }
    const double eps_hi = accounted(hi);
    if (eps_hi <= target.epsilon && eps_hi >= target.epsilon - kWindow) return hi;
    throw CalibrationError("sigma search did not land in the target window");
}

double delta_default(std::size_t n) {
    if (n < 3) throw ValidationError("delta rule needs N >= 3");
    const double nd = static_cast<double>(n);
    return 1.0 / (nd * std::log(nd));
}

double parallel_compose(double eps_a, double eps_b) {
    if (!(eps_a > 0.0) || !(eps_b > 0.0))
        throw ValidationError("parallel composition needs positive budgets");
    return std::max(eps_a, eps_b);
}

nlohmann::json ledger_to_json(const AccountantLedger& ledger) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : ledger.events()) {
        nlohmann::json je;
        switch (e.kind) {
            case AccountantLedger::Event::Kind::subsampled_gaussian:
                je["type"] = "subsampled_gaussian";
                je["q"] = e.q;
                je["sigma"] = e.sigma;
                je["steps"] = e.count;
                break;
            case AccountantLedger::Event::Kind::gaussian:
                je["type"] = "gaussian";
                je["sigma"] = e.sigma;
                je["releases"] = e.count;
                break;
            case AccountantLedger::Event::Kind::pure:
                je["type"] = "pure";
                je["epsilon"] = e.epsilon;
                break;
        }
        events.push_back(je);
    }
    return nlohmann::json{{"events", events}};
}

AccountantLedger ledger_from_json(const nlohmann::json& j) {
    AccountantLedger ledger;
    for (const auto& je : j.at("events")) {
        const std::string type = je.at("type").get<std::string>();
        if (type == "subsampled_gaussian") {
            ledger.add_subsampled_gaussian(je.at("q").get<double>(),
                                           je.at("sigma").get<double>(),
                                           je.at("steps").get<std::size_t>());
        } else if (type == "gaussian") {
            ledger.add_gaussian(je.at("sigma").get<double>(),
                                je.at("releases").get<std::size_t>());
        } else if (type == "pure") {
            ledger.add_pure(je.at("epsilon").get<double>());
        } else {
            throw FormatError("unknown ledger event type: " + type);
        }
    }
    return ledger;
}

} // namespace dpsynth
