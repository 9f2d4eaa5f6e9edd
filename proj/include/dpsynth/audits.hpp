#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsynth/schedule.hpp"

namespace dpsynth {

/// Outcome of one executable claim check. A failing audit must carry a
/// concrete witness of the violation.
struct AuditReport {
    std::string id;
    std::string claim;
    bool passed = false;
    nlohmann::json witness;
    nlohmann::json tolerances;

    nlohmann::json to_json() const;
};

/// Brute-force mean-embedding sensitivity against the analytic bounds:
/// every enumerated maximum stays at or below the bound, and the +-1
/// alphabet achieves 2/m exactly under replace-one and 1/m under known-m.
AuditReport audit_sensitivity();

/// Releasing (x_t, e, t) lets anyone invert the forward process: the audit
/// reconstructs random inputs exactly (1e-9) and shows the control arm
/// with withheld noise cannot.
AuditReport audit_dppromise(std::size_t trials, const NoiseSchedule& sched);

struct AccountantGridPoint {
    double q = 1.0;
    double sigma = 1.0;
    std::size_t steps = 1;
    double delta = 1e-5;
};

/// High-resolution quadrature of the subsampled-Gaussian moment; the
/// independent route the accountant is audited against.
double quadrature_subsampled_rdp(double q, double sigma, std::size_t alpha,
                                 std::size_t intervals = 1 << 16);

/// Independent epsilon: quadrature RDP summed over steps, converted with
/// its own order-grid minimum search.
double quadrature_epsilon(const AccountantGridPoint& point);

/// Ledger-vs-oracle agreement within 1e-4 relative on every grid point,
/// plus monotonicity in the step count.
AuditReport audit_accountant(const std::vector<AccountantGridPoint>& grid);

std::vector<AccountantGridPoint> default_accountant_grid();

/// All audits in order; deterministic given the seeds baked into them.
std::vector<AuditReport> run_all_audits();

} // namespace dpsynth
