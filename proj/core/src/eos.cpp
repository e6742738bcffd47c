#include "cvsheet/eos.hpp"

#include <algorithm>

namespace cvsheet {

void eos_params::validate() const {
    if (!(gamma > 1.0)) throw invalid_argument_error("eos: gamma must exceed 1");
    if (!(C_V > 0.0)) throw invalid_argument_error("eos: C_V must be positive");
    if (!(eps > 0.0)) throw invalid_argument_error("eos: eps must be positive");
    if (!(rho0 > 0.0)) throw invalid_argument_error("eos: rho0 must be positive");
}

Real eos_model::dF(Real p, Real S, int kp, int kS) const {
    if (kp < 0 || kS < 0 || kp + kS > 8)
        throw invalid_argument_error("eos: derivative order out of range");
    if (custom) return custom(p, S, kp, kS);
    const Real arg = 1.0 + par.eps * par.eps * p;
    if (arg <= 0.0) throw invalid_argument_error("eos: 1 + eps^2 p must be positive");
    if (kp == 0 && kS == 0)
        return std::log(par.rho0) + (std::log(arg) - S / par.C_V) / par.gamma;
    if (kp == 0 && kS == 1) return -1.0 / (par.gamma * par.C_V);
    if (kp == 0) return 0.0;  // higher pure-S derivatives
    if (kS > 0) return 0.0;   // mixed derivatives vanish
    // d^k_p log(1 + eps^2 p) / gamma
    Real fac = 1.0;
    for (int i = 1; i < kp; ++i) fac *= -static_cast<Real>(i);
    return fac * std::pow(par.eps * par.eps / arg, kp) / par.gamma;
}

Real eos_model::log_density(Real p, Real S) const { return dF(p, S, 0, 0); }

Real eos_model::density(Real p, Real S) const { return std::exp(log_density(p, S)); }

Real eos_model::pressure(Real rho, Real S) const {
    if (!(rho > 0.0)) throw invalid_argument_error("eos: density must be positive");
    const Real e2 = par.eps * par.eps;
    return (std::pow(rho / par.rho0, par.gamma) * std::exp(S / par.C_V) - 1.0) / e2;
}

Real eos_model::sound_speed(Real p, Real S) const {
    // c_s^2 = dp/drho at fixed S = 1 / (rho dF/dp)
    const Real rho = density(p, S);
    const Real fp = dF(p, S, 1, 0);
    if (!(fp > 0.0)) throw invalid_argument_error("eos: dF/dp must be positive");
    return std::sqrt(1.0 / (rho * fp));
}

Real eos_model::alfven_speed(Real p, Real S, Real babs) const {
    return std::abs(babs) / std::sqrt(density(p, S));
}

Real fit_normalization(const eos_params& par, const std::vector<std::array<Real, 3>>& samples) {
    if (samples.empty()) throw invalid_argument_error("fit_normalization: no samples");
    par.validate();
    Real acc = 0;
    for (const auto& s : samples) {
        const Real p = s[0], S = s[1], rho = s[2];
        const Real arg = 1.0 + par.eps * par.eps * p;
        if (arg <= 0.0 || rho <= 0.0)
            throw invalid_argument_error("fit_normalization: sample outside admissible range");
        acc += std::log(rho) - (std::log(arg) - S / par.C_V) / par.gamma;
    }
    return std::exp(acc / static_cast<Real>(samples.size()));
}

derivative_bound_report derivative_bounds_check(const eos_model& eos, Real p_lo, Real p_hi,
                                                Real S_lo, Real S_hi, int kmax) {
    if (kmax < 1 || kmax > 4)
        throw invalid_argument_error("derivative_bounds_check: kmax must be in 1..4");
    if (p_hi < p_lo || S_hi < S_lo)
        throw invalid_argument_error("derivative_bounds_check: empty window");
    const Real e2 = eos.par.eps * eos.par.eps;
    derivative_bound_report rep;
    rep.min_arg = 1.0 + e2 * p_lo;
    if (rep.min_arg <= 0.0)
        throw invalid_argument_error(
            "derivative_bounds_check: window touches the degenerate pressure");
    rep.sup_dp.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
    const int n = 64;
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            const Real p = p_lo + (p_hi - p_lo) * i / n;
            const Real S = S_lo + (S_hi - S_lo) * j / n;
            for (int k = 0; k <= kmax; ++k)
                rep.sup_dp[static_cast<std::size_t>(k)] =
                    std::max(rep.sup_dp[static_cast<std::size_t>(k)],
                             std::abs(eos.dF(p, S, k, 0)));
            rep.sup_dS = std::max(rep.sup_dS, std::abs(eos.dF(p, S, 0, 1)));
        }
    }
    rep.finite = true;
    for (Real b : rep.sup_dp) rep.finite = rep.finite && std::isfinite(b);
    rep.finite = rep.finite && std::isfinite(rep.sup_dS);
    return rep;
}

}  // namespace cvsheet
