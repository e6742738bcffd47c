#pragma once

#include "cvsheet/geometry.hpp"
#include "cvsheet/paradiff.hpp"

namespace cvsheet {

// One flattened phase of the slab in divergence form.  The energy density is
// E grad u . grad u with
//   E = [[J, 0, -p1], [0, J, -p2], [-p1, -p2, (1 + |p|^2)/J]],
// p_i = chi(x3) d_i psi and J = d3 phi, so Delta^phi u = 0 iff the form is
// stationary.  Discretization: trigonometric grid horizontally, Lobatto nodes
// vertically, and the form itself evaluated with trapezoid x doubled-grid
// Clenshaw-Curtis quadrature.  Evaluating the energy (rather than collocating
// the strong operator) keeps the discrete problem symmetric positive definite
// for any coefficient field and makes the boundary flux variational, which is
// what the DtN symmetry and flat-spectrum tolerances rely on.
struct elliptic_problem {
    int d = 2, n1 = 0, n2 = 0, Nv = 0;
    phase_id phase = phase_id::plus;
    Real H = 0;

    std::vector<Real> zsol;        // solution nodes, interface first, wall last
    std::vector<Real> zq, wq;      // doubled quadrature nodes and weights
    dmat Rq, Dq;                   // value / x3-derivative maps onto zq
    dmat Rqt, Dqt;                 // their transposes

    // coefficient tables at quadrature nodes, plane-major like bulk_field
    std::vector<Real> cJ, cp1, cp2, ce33;

    // flat-slab P1 preconditioner, Thomas-factorized per horizontal mode on
    // the Nv interior+wall unknowns
    std::vector<Real> fac_sub, fac_diag_inv;

    int nh() const { return n1 * n2; }
    int nq() const { return 2 * Nv + 1; }
};

elliptic_problem make_elliptic_problem(const flattened_geometry& geo, phase_id p);

struct dtn_stats {
    int iterations = 0;
    Real relative_residual = 0;
    bool converged = false;
};

// K u on the full nodal space, no boundary elimination.  Plane 0 of the
// result is the variational boundary flux -+ N . grad^phi u, the integrand of
// the Dirichlet-to-Neumann pairing.
bulk_field stiffness_apply(const bulk_field& u, const elliptic_problem& prob);

// Harmonic extension of interface data f (row-major n1 x n2 nodal values):
// Dirichlet trace at the interface plane, natural condition at the wall.
// Preconditioned CG on the eliminated system; throws solver_error with the
// final residual when the iteration cap is hit.
bulk_field harmonic_extend(const std::vector<Real>& f, const elliptic_problem& prob,
                           dtn_stats* stats = nullptr, Real tol = 1e-8, int maxit = 500);

// A prepared operator is immutable; concurrent applies on distinct data are
// safe (each solve owns its workspace).
struct dtn_operator {
    elliptic_problem prob;
    Real tol = 1e-8;
    int maxit = 500;
};

dtn_operator make_dtn_operator(const flattened_geometry& geo, phase_id p,
                               Real tol = 1e-8, int maxit = 500);

std::vector<Real> dtn_apply_nodal(const std::vector<Real>& f, const dtn_operator& op,
                                  dtn_stats* stats = nullptr);

spectral_field dtn_apply(const spectral_field& f, const dtn_operator& op,
                         dtn_stats* stats = nullptr);

// f - mean(f); idempotent.
spectral_field zero_freq_project(spectral_field f);

// Solves (N^+ + N^-) g = h on mean-zero data by outer PCG, preconditioned by
// the flat-interface multiplier (2 |xi| tanh(H |xi|))^{-1}; g returned
// mean-zero.  Inner solves run two decades tighter than the outer tolerance.
spectral_field dtn_inverse(const spectral_field& h, const dtn_operator& plus,
                           const dtn_operator& minus, dtn_stats* stats = nullptr,
                           Real tol = 1e-8, int maxit = 500);

// Frequency-scaling comparison of the discrete operators against their
// paradifferential models on f_k = cos(k (d1 x1 + d2 x2)): principal-only
// residual N^+ f - T_{lambda} f, the two-order model
// N^+ f - T_{lambda + Lambda^(0,+)} f, and the phase difference (N^+ - N^-) f.
// The axis family (1,0) is degenerate when psi varies only in x1: the model
// then agrees with the operator to solver noise, so an oblique direction is
// the configuration that exercises the subprincipal part.
struct paralin_report {
    std::vector<Real> freqs;
    std::vector<Real> dtn_norm;
    std::vector<Real> residual_norm;
    std::vector<Real> sub_residual_norm;
    std::vector<Real> difference_norm;
    Real dtn_slope = 0;
    Real residual_slope = 0;
    Real sub_residual_slope = 0;
    Real difference_slope = 0;
    Real measured_gain() const { return dtn_slope - residual_slope; }
};

paralin_report paralinearization_residual(const spectral_field& psi, Real H,
                                          const std::vector<int>& freqs = {8, 16, 32},
                                          int Nv = 96, Real tol = 1e-10,
                                          std::array<int, 2> dir = {1, 0});

}  // namespace cvsheet
