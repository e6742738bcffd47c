#pragma once

#include <memory>

#include "cvsheet/common.hpp"

namespace cvsheet {

// Interface point and frequency on Sigma = T^{d-1}.  In 2D (d == 2) the
// second slot of both is zero and ignored.
using Xpt = std::array<Real, 2>;
using Freq = std::array<Real, 2>;

// Fourier-side carrier for a real periodic function on the interface.
// Coefficients use the slot layout i1*n2+i2 with f = sum_k c[k] e^{i k.x'},
// matching fft::forward.  n2 == 1 in 2D.
struct spectral_field {
    int d = 2;
    int n1 = 0;
    int n2 = 1;
    std::vector<Complex> c;

    spectral_field() = default;
    spectral_field(int d_, int n1_, int n2_);

    static spectral_field from_values(const std::vector<Real>& vals, int d, int n1, int n2);
    std::vector<Real> values() const;

    std::size_t size() const { return c.size(); }
    std::array<int, 2> wavenumber(std::size_t slot) const;

    // Coefficient access by integer wavenumber, |k1| <= n1/2, |k2| <= n2/2.
    Complex& at(int k1, int k2);
    Complex at(int k1, int k2) const;

    // Largest max |c(k)| - conj(c(-k)) over representable pairs; zero for a
    // real-valued function up to round-off.
    Real hermitian_defect() const;

    Real l2_norm() const;             // sqrt(sum |c|^2), Plancherel up to (2 pi)^{d-1}
    Real sobolev_norm(Real s) const;  // weights (1 + |k|^2)^{s/2}
    Real max_abs() const;             // max |f| on the collocation grid
};

// Largest Euclidean |k| carrying a coefficient above rel_tol * max|c|.
Real band_limit(const spectral_field& u, Real rel_tol = 1e-13);

// Copy onto a finer / coarser grid, preserving (resp. dropping) modes.
spectral_field pad_modes(const spectral_field& u, int N1, int N2);
spectral_field truncate_modes(const spectral_field& u, int N1, int N2);

// Dyadic windows and the paradifferential cutoffs.  Theta is a smooth
// transition equal to 1 below radius 1 and 0 above radius 2; phi = 1 - Theta
// removes the low frequencies; chi(theta, eta) confines the symbol's spatial
// frequencies to |theta| <= eps2 |eta| and is identically 1 for
// |theta| <= eps1 |eta|.
struct pl_cutoffs {
    Real eps1 = Real(1) / 10;
    Real eps2 = Real(1) / 8;

    Real Theta(Real r) const;
    Real phi(Real r) const { return 1 - Theta(r); }
    Real band(int k, Real r) const;      // vartheta_k
    Real low_pass(int m, Real r) const;  // Theta(r / 2^m), projector P_{<=m}
    Real chi(Real theta_norm, Real eta_norm) const;
};

// A paradifferential symbol truncated to principal + sub-principal parts.
// principal must be homogeneous of degree `order` in xi and sub-principal of
// degree order-1; either derivative callable may be empty when a closed form
// is not carried (composition then refuses the cross term).
struct symbol {
    Real order = 0;
    int d = 2;
    bool x_independent = false;
    std::string kind;  // "dtn", "curvature", "symmetrizer", "composite", ...

    std::function<Complex(const Xpt&, const Freq&)> principal;
    std::function<Complex(const Xpt&, const Freq&)> subprincipal;
    std::function<std::array<Complex, 2>(const Xpt&, const Freq&)> dxi_principal;
    std::function<std::array<Complex, 2>(const Xpt&, const Freq&)> dx_principal;

    Complex eval(const Xpt& x, const Freq& xi) const;
    Complex eval_principal(const Xpt& x, const Freq& xi) const { return principal(x, xi); }
    Complex eval_subprincipal(const Xpt& x, const Freq& xi) const;
};

// Pointwise second-order jet of the interface profile, evaluated anywhere by
// direct summation of the (compressed) Fourier series.
class interface_jet {
  public:
    explicit interface_jet(const spectral_field& psi, Real drop_tol = 1e-14);

    int dim() const { return d_; }
    Real value(const Xpt& x) const;
    std::array<Real, 2> grad(const Xpt& x) const;
    // Hessian entries (11, 12, 22).
    std::array<Real, 3> hess(const Xpt& x) const;

  private:
    int d_ = 2;
    struct term {
        Real k1, k2;
        Complex a;
    };
    std::vector<term> terms_;
};

// Littlewood-Paley band projection P_k; k < 0 yields the zero field.
spectral_field lp_project(const spectral_field& u, int k, const pl_cutoffs& pl = {});

// T_a u.  Three realizations share the interface:
//  - x-independent symbols act as the Fourier multiplier a(eta) phi(eta) u^(eta);
//  - plain functions use the dyadic paraproduct sum_k P_{<=k-3} a . P_k u
//    (no phi cutoff, so Bony reconstruction is exact);
//  - general symbols use the quantization sum_eta chi(xi-eta, eta)
//    a^(xi-eta, eta) phi(eta) u^(eta) with a transformed in x' per mode.
spectral_field para_apply(const symbol& a, const spectral_field& u, const pl_cutoffs& pl = {},
                          int jobs = 1);
spectral_field para_apply(const spectral_field& a, const spectral_field& u,
                          const pl_cutoffs& pl = {});

struct bony_parts {
    spectral_field Ta_u;
    spectral_field Tu_a;
    spectral_field remainder;
};

// a u = T_a u + T_u a + R(u, a), exact at retained modes for band-limited
// inputs (the three index ranges k <= l-3, l <= k-3, |k-l| <= 2 partition all
// band pairs).
bony_parts bony_decompose(const spectral_field& a, const spectral_field& u,
                          const pl_cutoffs& pl = {});

// Dirichlet-to-Neumann symbol for one phase: principal
// lambda = sqrt((1 + |grad psi|^2)|xi|^2 - (grad psi . xi)^2) for either sign,
// sub-principal per the lower-phase closed form and its negated conjugate for
// the upper phase.
symbol symbol_dtn(const spectral_field& psi, int sign);

// Two-phase sum Lambda = 2 lambda + 2i Im Lambda^(0),-; the sub-principal is
// purely imaginary, which is what makes the symmetrization below cancel.
symbol symbol_lambda_summed(const spectral_field& psi);

// -(1/2) (d_x . d_xi) lambda at a point; equals Im Lambda^(0),- (self-adjoint
// normalization of the DtN symbol), which the tests verify.
Real dtn_subprincipal_imag_closed_form(const interface_jet& jet, const Xpt& x, const Freq& xi);

// Mean curvature symbol: principal h2 = lambda^2 (1 + |grad psi|^2)^{-3/2},
// sub-principal h1 = -(i/2)(d_x . d_xi) h2.
symbol symbol_curvature(const spectral_field& psi);

// Nonlinear mean curvature div(grad psi / sqrt(1 + |grad psi|^2)), evaluated
// pseudospectrally on a padded grid.
spectral_field mean_curvature(const spectral_field& psi);

struct symmetrizer_symbols {
    symbol m;  // order 1.5, m^(1.5) = sqrt(h2 Lambda^(1)), Re m^(0.5) = 0
    symbol n;  // order 0, 2^{-1/3} (1 + |grad psi|^2)^{-1/4}, xi-independent
    symbol M;  // order s - 1/2, (m^(1.5))^{(2s-1)/3}
};

symmetrizer_symbols symbol_symmetrizers(const spectral_field& psi, Real s);

// Two-term composition a#b.  r >= 2 keeps the full sub-principal
//   a1 b0' + a0 b1' + (1/i) d_xi a0 . d_x b0'
// (primes marking b's parts); r < 2 keeps the principal product only.
symbol symbol_compose(const symbol& a, const symbol& b, Real r = 2);

struct symmetrization_report {
    Real order3_max = 0;  // max |principal residual| over the samples
    Real order2_max = 0;  // max |sub-principal residual|
    std::vector<Real> freqs;
    std::vector<Real> lhs_norm;       // ||T_n T_Lambda T_h u_k||
    std::vector<Real> residual_norm;  // ||(T_n T_Lambda T_h - T_m T_m T_n) u_k||
    Real lhs_slope = 0;
    Real residual_slope = 0;
    Real measured_gain() const { return lhs_slope - residual_slope; }
};

// Symbol-level residual n#(Lambda#h) - (m#m)#n sampled at nsamples random
// (x', xi), plus the operator-level frequency-scaling comparison on
// u_k = cos(k x1).
symmetrization_report symmetrization_residual(const spectral_field& psi, int nsamples = 1000,
                                              std::uint64_t seed = 1u, const pl_cutoffs& pl = {});

}  // namespace cvsheet
