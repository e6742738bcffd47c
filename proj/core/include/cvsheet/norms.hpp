#pragma once

#include "cvsheet/eos.hpp"
#include "cvsheet/geometry.hpp"

#include <string>
#include <utility>

namespace cvsheet {

// Multi-index of the starred calculus: a0 time, a1/a2 horizontal, a3 plain
// vertical, a4 the omega-weighted vertical (omega dz).  The anisotropic
// length counts the plain vertical derivative twice:
//   <a> = a0 + a1 + a2 + 2 a3 + a4.
struct star_index {
    int a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0;
};

int star_weight(const star_index& a);

// All indices with <a> <= m (a2 forced to zero when d = 2), in a fixed
// deterministic order.
std::vector<star_index> star_indices(int d, int m);

// The purely tangential alphabet of weight exactly w: a3 = 0.  These are the
// derivatives entering the layered energies.
std::vector<star_index> tangential_family(int d, int w);

// Uniformly spaced time levels, odd count; norms and derivatives are
// evaluated at the centre level with second-order centered differences.
struct bulk_history {
    std::vector<bulk_field> levels;
    Real dt = 0;
};

// d_*^a f at the centre level.  Vertical ordering follows the definition:
// the plain vertical derivatives act first, the weighted ones outermost.
bulk_field star_derivative(const bulk_history& f, const slab_grid& g, const star_index& a);

struct norm_contribution {
    star_index alpha;
    Real value_sq = 0;
};

// Anisotropic Sobolev norm over one phase, m <= 4.  The static overload
// treats the field as time-independent (all a0 > 0 terms vanish).
Real anisotropic_norm(const bulk_history& f, const slab_grid& g, int m,
                      std::vector<norm_contribution>* breakdown = nullptr);
Real anisotropic_norm(const bulk_field& f, const slab_grid& g, int m,
                      std::vector<norm_contribution>* breakdown = nullptr);

// Unweighted H^m companion for the embedding comparisons.
Real isotropic_norm(const bulk_history& f, const slab_grid& g, int m);
Real isotropic_norm(const bulk_field& f, const slab_grid& g, int m);

// Spectral Sobolev norm |f|_s of interface data on the torus; s may be
// fractional.
Real interface_sobolev(const std::vector<Real>& f, const slab_grid& g, Real s);

// One interior contribution of the layered energy at a given base order:
// the amplitude eps^{eps_pow} T^alpha dt^k applied to the state tuple, with
// the Mach weight F_p^{fp_exp} on the pressure slot, measured in the
// anisotropic norm of order norm_order.
struct energy_term {
    star_index alpha;    // <alpha> = 2l, a3 = 0
    int k = 0;           // extra time derivatives
    int eps_pow = 0;     // 2l
    Real fp_exp = 0;     // (k + a0 - l - (base-1))_+ / 2
    int norm_order = 0;  // base - k - l
};

std::vector<energy_term> energy_terms(int d, int base, int l);

struct boundary_term {
    int k = 0;
    int eps_pow = 0;   // 2l
    Real sobolev = 0;  // base + 1 + l - k
};

std::vector<boundary_term> energy_boundary_terms(int base, int l);

// One phase of the evolving state at a single time level.  v[1], b[1] are
// ignored when d = 2.
struct phase_fields {
    std::array<bulk_field, 3> v;
    std::array<bulk_field, 3> b;
    bulk_field S;
    bulk_field p;
};

struct phase_history {
    std::vector<phase_fields> levels;
    Real dt = 0;
};

struct interface_state {
    std::vector<std::vector<Real>> levels;  // psi at each time level
    Real dt = 0;
};

struct energy_layer_result {
    Real value = 0;
    Real interior = 0;
    Real boundary = 0;
    std::vector<std::pair<energy_term, Real>> interior_parts;    // summed over phases
    std::vector<std::pair<boundary_term, Real>> boundary_parts;  // sigma-weighted
};

// Layer l of the energy functional at the stated base order (default 2, the
// desk-scale reduction of the order-4 original; the weight pattern is
// independent of the base).  The explicit epsilon enters only through the
// layer amplitude; the Mach weight F_p is evaluated pointwise per level from
// the equation of state.
energy_layer_result energy_layer(const phase_history& plus, const phase_history& minus,
                                 const interface_state& psi, const slab_grid& g,
                                 const eos_model& eos_plus, const eos_model& eos_minus,
                                 Real sigma, Real eps, int l, int base = 2);

struct embedding_sample {
    std::string label;
    Real sup_norm = 0;
    Real star3 = 0;  // anisotropic H_*^3
    Real iso3 = 0;   // plain H^3
    Real ratio = 0;  // sup / star3
};

struct embedding_report {
    std::vector<embedding_sample> samples;
    Real max_ratio = 0;
};

// Numerical witness for the sup-norm embedding: constants, horizontal waves,
// and boundary-layer profiles e^{-z/delta}.  The weighted calculus keeps the
// starred norm bounded on layers whose plain H^3 norm blows up.
embedding_report embedding_spot_check(const slab_grid& g);

}  // namespace cvsheet
