#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "cvsheet/common.hpp"
#include "cvsheet/eos.hpp"
#include "cvsheet/geometry.hpp"

namespace cvsheet {

// Interface trace data for one phase. All arrays share a common length; v2
// and b2 are unused when d = 2 (they may be empty or zero-filled).
struct phase_trace {
    std::vector<Real> rho;
    std::vector<Real> cs;
    std::vector<Real> v1, v2;
    std::vector<Real> b1, b2;
};

struct two_phase_trace {
    int d = 3;
    phase_trace plus, minus;

    std::size_t size() const { return plus.rho.size(); }
    const phase_trace& side(phase_id p) const { return p == phase_id::plus ? plus : minus; }
    void validate() const;
};

// Alfven speed |b|/sqrt(rho) and the weight a = sqrt(rho (1 + (c_A/c_s)^2))
// entering both stability conditions.
struct speed_set {
    std::vector<Real> c_A_plus, c_A_minus;
    std::vector<Real> a_plus, a_minus;
};

speed_set speeds(const two_phase_trace& tr);

struct stability_report {
    bool holds = false;
    // Slack of the upper bound: min over points and phases of
    // (1 - delta0)|b+ x b-| - a |b_opp x [v]| in 3D, and of the speed sum
    // minus (1 + delta0)|[v1]| in 2D.
    Real margin_upper = 0;
    // Slack of the lower bound: min of a |b_opp x [v]| - delta0 in 3D, and
    // min |[v1]| in 2D.
    Real margin_lower = 0;
    std::size_t worst_index = 0;
};

stability_report check_stability_3d(const two_phase_trace& tr, Real delta0);

struct stability_report_2d {
    bool holds = false;
    Real margin_upper = 0;
    Real margin_lower = 0;
    std::size_t worst_index = 0;
    // Rectilinear-background classification |v|^2 < c_s^2 c_A^2/(c_A^2+c_s^2),
    // reported per phase over all points.
    bool subsonic_plus = false, subsonic_minus = false;
    Real subsonic_margin = 0;
};

stability_report_2d check_stability_2d(const two_phase_trace& tr, Real delta0);

// Interface symmetrizer amplitudes with their vertical localizer eta, a
// smooth bump with eta(0) = 1 supported in |x3| < delta1.
struct symmetrizer_field {
    std::vector<Real> mu_plus, mu_minus;
    Real delta1 = 1.0;

    Real eta(Real x3) const;
    Real eta_deriv(Real x3) const;
    Real mu(phase_id p, std::size_t k, Real x3) const {
        return (p == phase_id::plus ? mu_plus[k] : mu_minus[k]) * eta(x3);
    }
};

// Solves the pointwise 2x2 system [v] = mu+ b+ - mu- b- (3D) or picks the
// closed-form/degenerate choice (2D).
symmetrizer_field solve_mu_3d(const two_phase_trace& tr);
symmetrizer_field solve_mu_2d(const two_phase_trace& tr);

struct hyperbolicity_report {
    std::vector<Real> min_eig_plus, min_eig_minus;
    Real min_eigenvalue = 0;
    bool positive = false;
    // Pointwise sign agreement between the eigensolver and the closed-form
    // determinant 1 - mu^2 rho (1 + (c_A/c_s)^2).
    bool equivalence_holds = false;
};

hyperbolicity_report hyperbolicity_check(const two_phase_trace& tr,
                                         const symmetrizer_field& mu);

struct ellipticity_report {
    Real infimum = 0;        // closed-form eigenvalue minimum over points
    Real sweep_infimum = 0;  // dense angular sweep (3600 directions in 3D)
    std::array<Real, 2> direction{1.0, 0.0};
    std::size_t worst_index = 0;
};

ellipticity_report ellipticity_form(const two_phase_trace& tr);

// Recovers the interface gradient from the tangential magnetic traces and
// the normal components via b~ . grad psi = b3~ for both phases.
std::vector<std::array<Real, 2>> recover_interface_gradient(
    const two_phase_trace& tr, const std::vector<Real>& b3_plus,
    const std::vector<Real>& b3_minus);

// Bulk phase state for the secondary-symmetrization check. Vector fields use
// the (x1, x2, vertical) slots of the array; the middle slot is ignored when
// d = 2. Empty *_t fields are treated as zero.
struct bulk_state {
    std::array<bulk_field, 3> v, b;
    bulk_field p, S;
    std::array<bulk_field, 3> v_t, b_t;
    bulk_field p_t;
};

struct symmetrize_report {
    // Max-abs residual of the momentum, continuity, and induction rows.
    std::array<Real, 3> original_residual{};
    // Same rows after the mu-recombination.
    std::array<Real, 3> transformed_residual{};
    // Direct assembly of the recombined rows minus the linear combination of
    // the original residuals; nonzero only through the discrete failure of
    // the orthogonality identity in the continuity row.
    std::array<Real, 3> recombination_error{};
    // Max-abs of (grad (|b|^2/2) - (b.grad) b) . b.
    Real orthogonality_max = 0;
};

symmetrize_report secondary_symmetrize_residual(
    const bulk_state& st, const flattened_geometry& geo, const symmetrizer_field& mu,
    const eos_model& eos, deriv_backend be = deriv_backend::spectral);

}  // namespace cvsheet
