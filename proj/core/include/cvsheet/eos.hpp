#pragma once

#include "cvsheet/common.hpp"

#include <functional>

namespace cvsheet {

// Scaled barotropic-entropic equation of state
//   p = (1/eps^2) ((rho/rho0)^gamma e^{S/C_V} - 1),
// inverted through F(p, S) = log rho.  rho0 is a fitted normalization, not a
// hardwired constant; see fit_normalization.
struct eos_params {
    Real gamma = 2.0;
    Real C_V = 1.0;
    Real eps = 1.0;
    Real rho0 = 1.0;

    void validate() const;
};

struct thermo_state {
    Real p = 0;
    Real S = 0;
};

// Optional override for the constitutive law: returns the mixed partial
// d^{kp}_p d^{kS}_S F(p, S).  When empty, the polytropic closed form is used.
using eos_hook = std::function<Real(Real p, Real S, int kp, int kS)>;

struct eos_model {
    eos_params par;
    eos_hook custom;

    explicit eos_model(eos_params pr = {}, eos_hook hook = {})
        : par(pr), custom(std::move(hook)) {
        par.validate();
    }

    Real log_density(Real p, Real S) const;
    Real density(Real p, Real S) const;
    Real pressure(Real rho, Real S) const;
    // d^kp_p d^kS_S F; closed-form for the polytropic law (kp + kS <= 8)
    Real dF(Real p, Real S, int kp, int kS) const;
    Real sound_speed(Real p, Real S) const;
    Real alfven_speed(Real p, Real S, Real babs) const;
};

// Least-squares fit of log rho0 from reference samples {p, S, rho}.
Real fit_normalization(const eos_params& par, const std::vector<std::array<Real, 3>>& samples);

struct derivative_bound_report {
    std::vector<Real> sup_dp;  // sup over the window of |d^k_p F|, k = 0..kmax
    Real sup_dS = 0;
    Real min_arg = 0;  // min of 1 + eps^2 p over the window
    bool finite = false;
};

// Samples F-derivatives over a (p, S) window and reports the observed sup
// bounds; throws when the window touches the degenerate pressure 1 + eps^2 p
// <= 0.
derivative_bound_report derivative_bounds_check(const eos_model& eos, Real p_lo, Real p_hi,
                                                Real S_lo, Real S_hi, int kmax = 4);

}  // namespace cvsheet
