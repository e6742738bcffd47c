#pragma once

#include "cvsheet/chebyshev.hpp"
#include "cvsheet/common.hpp"

#include <functional>

namespace cvsheet {

enum class phase_id { plus, minus };
inline Real phase_sign(phase_id p) { return p == phase_id::plus ? 1.0 : -1.0; }

// Reference slab (-H,H) x torus, interface at x3 = 0.  Uniform periodic grid
// in the horizontal directions, Chebyshev-Lobatto nodes per phase in the
// vertical with node 0 on the interface and node Nv on the outer wall.
struct slab_grid {
    int d = 3;
    Real H = 20.0;
    int Nh = 16;
    int Nv = 16;

    int n1 = 0, n2 = 0;
    std::vector<Real> xh;
    std::vector<Real> zplus, zminus;

    static slab_grid make(int d, Real H, int Nh, int Nv);

    int nh() const { return n1 * n2; }
    int nvert() const { return Nv + 1; }
    std::size_t bulk_size() const { return static_cast<std::size_t>(nvert()) * nh(); }
    const std::vector<Real>& z(phase_id p) const {
        return p == phase_id::plus ? zplus : zminus;
    }
    Real hx() const { return 2.0 * pi / n1; }
};

// Vertical cutoff: identically 1 on (-1,1), supported in [-(H-1), H-1], C^8,
// built from degree-15 smoothstep ramps around a minimal-slope plateau.  The
// requested slope bound 1/(psi0_sup + 20) is unattainable whenever
// H - 2 < psi0_sup + 20 (the drop from 1 to 0 over a width-(H-2) window
// forces sup |chi'| >= 1/(H-2)); slope_bound_met records the outcome instead
// of failing the build.
struct cutoff_function {
    Real H = 0;
    Real psi0_sup = 0;
    Real slope_target = 0;
    Real slope_achieved = 0;
    bool slope_bound_met = false;
    Real ramp_fraction = 0;

    Real eval(Real x3, int order = 0) const;
    std::vector<Real> table(const std::vector<Real>& z, int order = 0) const;
    Real sum_sup_derivatives() const;

    // plateau geometry: transition on [1, H-1] of width w, ramps of width m*w
    Real w = 0, r = 0, m = 0, a = 0;
    std::vector<std::vector<Real>> sder;  // smoothstep derivative coefficients, orders 0..8
    std::vector<Real> q;                  // smoothstep antiderivative coefficients
};

cutoff_function build_cutoff(Real H, Real psi0_sup);

// Scalar field on one phase of the slab, vertical index outermost so each
// horizontal plane is contiguous.
struct bulk_field {
    phase_id phase = phase_id::plus;
    int n1 = 0, n2 = 0, nv = 0;
    std::vector<Real> v;

    Real& at(int j, int i1, int i2) {
        return v[static_cast<std::size_t>(j) * (n1 * n2) + static_cast<std::size_t>(i1) * n2 + i2];
    }
    Real at(int j, int i1, int i2) const {
        return v[static_cast<std::size_t>(j) * (n1 * n2) + static_cast<std::size_t>(i1) * n2 + i2];
    }
    const Real* plane(int j) const { return v.data() + static_cast<std::size_t>(j) * (n1 * n2); }
    Real* plane(int j) { return v.data() + static_cast<std::size_t>(j) * (n1 * n2); }

    static bulk_field zeros(const slab_grid& g, phase_id p);
    static bulk_field sample(const slab_grid& g, phase_id p,
                             const std::function<Real(Real, Real, Real)>& fn);
};

// Flattening phi = x3 + chi(x3) psi(t, x') together with every derived table
// the calculus needs.  psi_t may be empty (static interface).
struct flattened_geometry {
    slab_grid grid;
    cutoff_function chi;
    std::vector<Real> psi, psi_t;
    std::vector<Real> dpsi1, dpsi2;  // spectral horizontal derivatives of psi
    Real sup_psi = 0;
    Real min_jacobian = 0;

    bulk_field phi_p, phi_m;
    bulk_field jac_p, jac_m;      // d3 phi
    bulk_field dphi1_p, dphi1_m;  // d1 phi
    bulk_field dphi2_p, dphi2_m;
    bulk_field phit_p, phit_m;    // dt phi

    const bulk_field& phi(phase_id p) const { return p == phase_id::plus ? phi_p : phi_m; }
    const bulk_field& jac(phase_id p) const { return p == phase_id::plus ? jac_p : jac_m; }
    const bulk_field& dphi1(phase_id p) const { return p == phase_id::plus ? dphi1_p : dphi1_m; }
    const bulk_field& dphi2(phase_id p) const { return p == phase_id::plus ? dphi2_p : dphi2_m; }
    const bulk_field& phit(phase_id p) const { return p == phase_id::plus ? phit_p : phit_m; }
};

flattened_geometry flatten(const slab_grid& g, const cutoff_function& chi,
                           std::vector<Real> psi, std::vector<Real> psi_t = {},
                           Real jacobian_safety = 1.0);

enum class deriv_backend { spectral, fd2 };

// Plain partial derivative on the reference slab, axis 0/1 horizontal
// (periodic), axis 2 vertical on the phase's Lobatto nodes.
bulk_field ref_derivative(const bulk_field& f, const slab_grid& g, int axis,
                          deriv_backend be = deriv_backend::spectral);

// Flattened-domain gradient: d components, tangential first, vertical last.
std::vector<bulk_field> covariant_grad(const bulk_field& f, const flattened_geometry& geo,
                                       deriv_backend be = deriv_backend::spectral);

// Material derivative in flattened coordinates; f_t is the time derivative of
// the nodal values, v the full velocity (v2 ignored when d = 2).
bulk_field material_derivative(const bulk_field& f_t, const bulk_field& f,
                               const std::array<bulk_field, 3>& v,
                               const flattened_geometry& geo,
                               deriv_backend be = deriv_backend::spectral);

// Reference-measure integrals (quadrature exactness set by Clenshaw-Curtis
// in the vertical, trapezoid = spectral in the horizontal).
Real volume_integral(const bulk_field& f, const slab_grid& g);
Real interface_integral(const std::vector<Real>& f, const slab_grid& g);

// Spectral horizontal derivative of interface data.
std::vector<Real> ih_derivative(const std::vector<Real>& f, const slab_grid& g, int axis);

// Tangential derivative alphabet for the weighted calculus; wdz is
// omega(x3) d3 with omega = (H^2 - x3^2) x3^2, which vanishes on the
// interface and both walls.
enum class tangential_op { dx1, dx2, wdz };

Real anisotropic_weight(Real z, Real H);

bulk_field apply_tangential(const bulk_field& f, const flattened_geometry& geo,
                            const std::vector<tangential_op>& gamma,
                            deriv_backend be = deriv_backend::spectral);

struct transport_check_result {
    Real transport_residual = 0;  // covariant time-derivative identity
    Real material_residual = 0;   // material-derivative variant (needs kinematic v)
    Real ibp_residual = 0;        // integration by parts in a fixed direction
};

// Checks the moving-domain transport identity and the flattened
// integration-by-parts identity on one phase.  times/geos/f/g are aligned
// histories with uniform spacing and odd length >= 3; derivatives in time are
// centered at the middle sample.  v (optional) must satisfy the kinematic
// conditions v.N = dt psi on the interface, v3 = 0 on the wall.
transport_check_result transport_identity_check(
    const std::vector<Real>& times, const std::vector<flattened_geometry>& geos,
    const std::vector<bulk_field>& f_hist, const std::vector<bulk_field>& g_hist,
    const std::array<bulk_field, 3>* v, int ibp_direction);

struct good_unknown_result {
    Real residual_max = 0;
    std::array<Real, 3> per_direction{0, 0, 0};
};

// Residual of the exact commutation identity linking T^gamma(covariant
// derivative of f), the good unknown T^gamma f - (T^gamma phi) d^phi_3 f, and
// the commutator tail; discretized with the chosen backend, so the max-norm
// shrinks at the backend's order as the grid is refined.
good_unknown_result good_unknown_residual(const bulk_field& f, const flattened_geometry& geo,
                                          const std::vector<tangential_op>& gamma,
                                          deriv_backend be = deriv_backend::fd2);

}  // namespace cvsheet
