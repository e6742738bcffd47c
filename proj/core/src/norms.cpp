#include "cvsheet/norms.hpp"

#include "cvsheet/fft.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cvsheet {

int star_weight(const star_index& a) { return a.a0 + a.a1 + a.a2 + 2 * a.a3 + a.a4; }

std::vector<star_index> star_indices(int d, int m) {
    if (d != 2 && d != 3) throw invalid_argument_error("star_indices: d must be 2 or 3");
    if (m < 0 || m > 4) throw invalid_argument_error("star_indices: order out of range");
    std::vector<star_index> out;
    for (int a0 = 0; a0 <= m; ++a0)
        for (int a1 = 0; a1 + a0 <= m; ++a1)
            for (int a2 = 0; a2 + a1 + a0 <= (d == 3 ? m : a1 + a0); ++a2)
                for (int a3 = 0; 2 * a3 + a2 + a1 + a0 <= m; ++a3)
                    for (int a4 = 0; a4 + 2 * a3 + a2 + a1 + a0 <= m; ++a4)
                        out.push_back({a0, a1, a2, a3, a4});
    return out;
}

std::vector<star_index> tangential_family(int d, int w) {
    if (d != 2 && d != 3) throw invalid_argument_error("tangential_family: d must be 2 or 3");
    if (w < 0) throw invalid_argument_error("tangential_family: negative weight");
    std::vector<star_index> out;
    for (int a0 = 0; a0 <= w; ++a0)
        for (int a1 = 0; a1 + a0 <= w; ++a1)
            for (int a2 = 0; a2 + a1 + a0 <= (d == 3 ? w : a1 + a0); ++a2) {
                int a4 = w - a0 - a1 - a2;
                out.push_back({a0, a1, a2, 0, a4});
            }
    return out;
}

namespace {

void check_dims(const bulk_field& f, const slab_grid& g, const char* who) {
    if (f.n1 != g.n1 || f.n2 != g.n2 || f.nv != g.nvert())
        throw grid_mismatch_error(std::string(who) + ": field does not match the grid");
}

// Second-order centered stencil for d^p/dt^p at the middle level.
struct time_stencil {
    int radius = 0;
    std::array<Real, 5> c{};
};

time_stencil make_stencil(int p, Real dt) {
    time_stencil s;
    switch (p) {
        case 0:
            s.radius = 0;
            s.c = {1, 0, 0, 0, 0};
            return s;
        case 1:
            s.radius = 1;
            s.c = {-0.5 / dt, 0, 0.5 / dt, 0, 0};
            return s;
        case 2: {
            Real h2 = dt * dt;
            s.radius = 1;
            s.c = {1 / h2, -2 / h2, 1 / h2, 0, 0};
            return s;
        }
        case 3: {
            Real h3 = dt * dt * dt;
            s.radius = 2;
            s.c = {-0.5 / h3, 1 / h3, 0, -1 / h3, 0.5 / h3};
            return s;
        }
        case 4: {
            Real h4 = dt * dt * dt * dt;
            s.radius = 2;
            s.c = {1 / h4, -4 / h4, 6 / h4, -4 / h4, 1 / h4};
            return s;
        }
        default:
            throw invalid_argument_error("time derivative order beyond 4 is not supported");
    }
}

void check_history(const std::vector<const bulk_field*>& lv, Real dt, const slab_grid& g,
                   int max_order) {
    if (lv.empty()) throw invalid_argument_error("empty time history");
    if (lv.size() % 2 == 0)
        throw invalid_argument_error("time history must have an odd number of levels");
    for (const bulk_field* f : lv) {
        check_dims(*f, g, "time history");
        if (f->phase != lv.front()->phase)
            throw invalid_argument_error("time history mixes phases");
    }
    if (max_order > 0) {
        if (!(dt > 0)) throw invalid_argument_error("time history needs dt > 0");
        int need = 2 * ((max_order + 1) / 2) + 1;
        if (static_cast<int>(lv.size()) < need)
            throw insufficient_history_error("time history too short for the requested order");
    }
}

bulk_field combine_time(const std::vector<const bulk_field*>& lv, Real dt, int p) {
    time_stencil st = make_stencil(p, dt);
    int mid = static_cast<int>(lv.size()) / 2;
    if (mid < st.radius)
        throw insufficient_history_error("time history too short for the requested order");
    bulk_field out = *lv[mid];
    if (p == 0) return out;
    std::fill(out.v.begin(), out.v.end(), 0.0);
    for (int i = -st.radius; i <= st.radius; ++i) {
        Real c = st.c[i + st.radius];
        if (c == 0) continue;
        const auto& src = lv[mid + i]->v;
        for (std::size_t q = 0; q < out.v.size(); ++q) out.v[q] += c * src[q];
    }
    return out;
}

void weight_planes(bulk_field& f, const slab_grid& g) {
    const auto& z = g.z(f.phase);
    for (int j = 0; j < f.nv; ++j) {
        Real w = anisotropic_weight(z[j], g.H);
        Real* p = f.plane(j);
        for (int q = 0; q < g.nh(); ++q) p[q] *= w;
    }
}

bulk_field weighted_dz(const bulk_field& f, const slab_grid& g) {
    bulk_field df = ref_derivative(f, g, 2);
    weight_planes(df, g);
    return df;
}

// (omega d3)^{a4} (d1^{a1} d2^{a2}) (d3^{a3}) dt^{a0}, rightmost first.
bulk_field star_apply(const std::vector<const bulk_field*>& lv, Real dt, const slab_grid& g,
                      const star_index& a) {
    if (a.a0 < 0 || a.a1 < 0 || a.a2 < 0 || a.a3 < 0 || a.a4 < 0)
        throw invalid_argument_error("star index has a negative entry");
    if (a.a2 > 0 && g.d == 2)
        throw invalid_argument_error("x2 derivative requested on a two-dimensional grid");
    bulk_field u = combine_time(lv, dt, a.a0);
    for (int r = 0; r < a.a3; ++r) u = ref_derivative(u, g, 2);
    for (int r = 0; r < a.a1; ++r) u = ref_derivative(u, g, 0);
    for (int r = 0; r < a.a2; ++r) u = ref_derivative(u, g, 1);
    for (int r = 0; r < a.a4; ++r) u = weighted_dz(u, g);
    return u;
}

Real l2_sq(bulk_field f, const slab_grid& g) {
    for (Real& x : f.v) x *= x;
    return volume_integral(f, g);
}

std::vector<const bulk_field*> level_ptrs(const bulk_history& h) {
    std::vector<const bulk_field*> lv;
    lv.reserve(h.levels.size());
    for (const auto& f : h.levels) lv.push_back(&f);
    return lv;
}

Real star_norm_impl(const std::vector<const bulk_field*>& lv, Real dt, const slab_grid& g, int m,
                    bool time_dependent, std::vector<norm_contribution>* breakdown) {
    if (m < 0 || m > 4) throw invalid_argument_error("anisotropic_norm: order out of range");
    check_history(lv, dt, g, time_dependent ? m : 0);
    if (breakdown) breakdown->clear();
    Real acc = 0;
    for (const star_index& a : star_indices(g.d, m)) {
        if (!time_dependent && a.a0 > 0) continue;
        Real s = l2_sq(star_apply(lv, dt, g, a), g);
        acc += s;
        if (breakdown) breakdown->push_back({a, s});
    }
    return std::sqrt(acc);
}

Real iso_norm_impl(const std::vector<const bulk_field*>& lv, Real dt, const slab_grid& g, int m,
                   bool time_dependent) {
    if (m < 0 || m > 4) throw invalid_argument_error("isotropic_norm: order out of range");
    check_history(lv, dt, g, time_dependent ? m : 0);
    Real acc = 0;
    for (int a0 = 0; a0 <= (time_dependent ? m : 0); ++a0)
        for (int a1 = 0; a1 + a0 <= m; ++a1)
            for (int a2 = 0; a2 + a1 + a0 <= (g.d == 3 ? m : a1 + a0); ++a2)
                for (int a3 = 0; a3 + a2 + a1 + a0 <= m; ++a3) {
                    bulk_field u = combine_time(lv, dt, a0);
                    for (int r = 0; r < a3; ++r) u = ref_derivative(u, g, 2);
                    for (int r = 0; r < a1; ++r) u = ref_derivative(u, g, 0);
                    for (int r = 0; r < a2; ++r) u = ref_derivative(u, g, 1);
                    acc += l2_sq(std::move(u), g);
                }
    return std::sqrt(acc);
}

}  // namespace

bulk_field star_derivative(const bulk_history& f, const slab_grid& g, const star_index& a) {
    auto lv = level_ptrs(f);
    check_history(lv, f.dt, g, a.a0);
    return star_apply(lv, f.dt, g, a);
}

Real anisotropic_norm(const bulk_history& f, const slab_grid& g, int m,
                      std::vector<norm_contribution>* breakdown) {
    return star_norm_impl(level_ptrs(f), f.dt, g, m, true, breakdown);
}

Real anisotropic_norm(const bulk_field& f, const slab_grid& g, int m,
                      std::vector<norm_contribution>* breakdown) {
    return star_norm_impl({&f}, 0.0, g, m, false, breakdown);
}

Real isotropic_norm(const bulk_history& f, const slab_grid& g, int m) {
    return iso_norm_impl(level_ptrs(f), f.dt, g, m, true);
}

Real isotropic_norm(const bulk_field& f, const slab_grid& g, int m) {
    return iso_norm_impl({&f}, 0.0, g, m, false);
}

Real interface_sobolev(const std::vector<Real>& f, const slab_grid& g, Real s) {
    if (static_cast<int>(f.size()) != g.nh())
        throw grid_mismatch_error("interface_sobolev: wrong interface size");
    std::vector<Complex> fh(f.size());
    fft::forward(f.data(), fh.data(), g.n1, g.n2);
    Real acc = 0;
    for (int i1 = 0; i1 < g.n1; ++i1) {
        Real k1 = fft::wavenumber(i1, g.n1);
        for (int i2 = 0; i2 < g.n2; ++i2) {
            Real k2 = g.d == 3 ? fft::wavenumber(i2, g.n2) : 0.0;
            Real xi2 = 1 + k1 * k1 + k2 * k2;
            acc += std::pow(xi2, s) * std::norm(fh[static_cast<std::size_t>(i1) * g.n2 + i2]);
        }
    }
    Real area = g.d == 3 ? 4 * pi * pi : 2 * pi;
    return std::sqrt(area * acc);
}

std::vector<energy_term> energy_terms(int d, int base, int l) {
    if (base < 2 || base > 4) throw invalid_argument_error("energy_terms: base out of range");
    if (l < 0 || l > base) throw invalid_argument_error("energy_terms: layer out of range");
    std::vector<energy_term> out;
    for (const star_index& alpha : tangential_family(d, 2 * l))
        for (int k = 0; k <= base - l; ++k) {
            energy_term t;
            t.alpha = alpha;
            t.k = k;
            t.eps_pow = 2 * l;
            int e = k + alpha.a0 - l - (base - 1);
            t.fp_exp = e > 0 ? 0.5 * e : 0.0;
            t.norm_order = base - k - l;
            out.push_back(t);
        }
    return out;
}

std::vector<boundary_term> energy_boundary_terms(int base, int l) {
    if (base < 2 || base > 4) throw invalid_argument_error("energy_boundary_terms: base out of range");
    if (l < 0 || l > base) throw invalid_argument_error("energy_boundary_terms: layer out of range");
    std::vector<boundary_term> out;
    for (int k = 0; k <= base + l; ++k) out.push_back({k, 2 * l, Real(base + 1 + l - k)});
    return out;
}

namespace {

void check_phase_level(const phase_fields& f, const slab_grid& g, phase_id ph) {
    auto one = [&](const bulk_field& u, const char* name) {
        check_dims(u, g, "energy_layer");
        if (u.phase != ph)
            throw invalid_argument_error(std::string("energy_layer: ") + name + " on the wrong phase");
    };
    one(f.v[0], "v1");
    one(f.v[2], "v3");
    one(f.b[0], "b1");
    one(f.b[2], "b3");
    if (g.d == 3) {
        one(f.v[1], "v2");
        one(f.b[1], "b2");
    }
    one(f.S, "S");
    one(f.p, "p");
}

// ||T^alpha dt^k u||_{H_*^m}^2 from the level stack of one scalar component.
Real layered_term_sq(const std::vector<const bulk_field*>& lv, Real dt, const slab_grid& g,
                     const energy_term& t) {
    Real acc = 0;
    for (const star_index& beta : star_indices(g.d, t.norm_order)) {
        int p = t.alpha.a0 + t.k + beta.a0;
        bulk_field u = combine_time(lv, dt, p);
        for (int r = 0; r < t.alpha.a1 + beta.a1; ++r) u = ref_derivative(u, g, 0);
        for (int r = 0; r < t.alpha.a2 + beta.a2; ++r) u = ref_derivative(u, g, 1);
        for (int r = 0; r < t.alpha.a4; ++r) u = weighted_dz(u, g);
        for (int r = 0; r < beta.a3; ++r) u = ref_derivative(u, g, 2);
        for (int r = 0; r < beta.a4; ++r) u = weighted_dz(u, g);
        acc += l2_sq(std::move(u), g);
    }
    return acc;
}

std::vector<Real> combine_interface(const std::vector<std::vector<Real>>& lv, Real dt, int p,
                                    int nh) {
    time_stencil st = make_stencil(p, dt);
    int mid = static_cast<int>(lv.size()) / 2;
    if (mid < st.radius)
        throw insufficient_history_error("interface history too short for the requested order");
    std::vector<Real> out(nh, 0.0);
    for (int i = -st.radius; i <= st.radius; ++i) {
        Real c = st.c[i + st.radius];
        if (c == 0) continue;
        const auto& src = lv[mid + i];
        for (int q = 0; q < nh; ++q) out[q] += c * src[q];
    }
    return out;
}

}  // namespace

energy_layer_result energy_layer(const phase_history& plus, const phase_history& minus,
                                 const interface_state& psi, const slab_grid& g,
                                 const eos_model& eos_plus, const eos_model& eos_minus,
                                 Real sigma, Real eps, int l, int base) {
    if (base < 2 || base > 4) throw invalid_argument_error("energy_layer: base out of range");
    if (l < 0 || l > base) throw invalid_argument_error("energy_layer: layer out of range");
    if (base + l > 4)
        throw invalid_argument_error("energy_layer: time-derivative depth beyond 4 is not supported");
    if (sigma < 0) throw invalid_argument_error("energy_layer: negative capillarity");

    std::size_t L = plus.levels.size();
    if (L == 0 || minus.levels.size() != L || psi.levels.size() != L)
        throw invalid_argument_error("energy_layer: histories have mismatched lengths");
    if (L % 2 == 0) throw invalid_argument_error("energy_layer: history length must be odd");
    if (plus.dt != minus.dt || plus.dt != psi.dt || !(plus.dt > 0))
        throw invalid_argument_error("energy_layer: histories need one common positive dt");
    int need = 2 * ((base + l + 1) / 2) + 1;
    if (static_cast<int>(L) < need)
        throw insufficient_history_error("energy_layer: history too short for the top time order");
    for (const auto& f : plus.levels) check_phase_level(f, g, phase_id::plus);
    for (const auto& f : minus.levels) check_phase_level(f, g, phase_id::minus);
    for (const auto& h : psi.levels)
        if (static_cast<int>(h.size()) != g.nh())
            throw grid_mismatch_error("energy_layer: interface level does not match the grid");

    Real dt = plus.dt;
    Real amp = std::pow(eps, Real(4 * l));
    std::vector<energy_term> terms = energy_terms(g.d, base, l);

    // Per phase: the plain component stacks once, the Mach-weighted pressure
    // once per distinct exponent (the weight is differentiated as part of the
    // product, not frozen at the centre level).
    struct phase_data {
        std::vector<std::vector<const bulk_field*>> plain;
        std::map<Real, std::vector<bulk_field>> weighted;
    };
    auto prepare = [&](const phase_history& h, const eos_model& eos) {
        phase_data pd;
        auto stack = [&](auto member) {
            std::vector<const bulk_field*> lv;
            for (const auto& f : h.levels) lv.push_back(member(f));
            pd.plain.push_back(std::move(lv));
        };
        stack([](const phase_fields& f) { return &f.v[0]; });
        if (g.d == 3) stack([](const phase_fields& f) { return &f.v[1]; });
        stack([](const phase_fields& f) { return &f.v[2]; });
        stack([](const phase_fields& f) { return &f.b[0]; });
        if (g.d == 3) stack([](const phase_fields& f) { return &f.b[1]; });
        stack([](const phase_fields& f) { return &f.b[2]; });
        stack([](const phase_fields& f) { return &f.S; });
        for (const energy_term& t : terms) {
            if (pd.weighted.count(t.fp_exp)) continue;
            std::vector<bulk_field> w;
            for (const auto& f : h.levels) {
                bulk_field u = f.p;
                if (t.fp_exp > 0) {
                    for (std::size_t q = 0; q < u.v.size(); ++q) {
                        Real fp = eos.dF(f.p.v[q], f.S.v[q], 1, 0);
                        if (fp < 0)
                            throw invalid_argument_error(
                                "energy_layer: negative compressibility weight");
                        u.v[q] = std::pow(fp, t.fp_exp) * u.v[q];
                    }
                }
                w.push_back(std::move(u));
            }
            pd.weighted.emplace(t.fp_exp, std::move(w));
        }
        return pd;
    };
    phase_data pp = prepare(plus, eos_plus);
    phase_data pm = prepare(minus, eos_minus);

    energy_layer_result res;
    for (const energy_term& t : terms) {
        Real val = 0;
        for (const phase_data* pd : {&pp, &pm}) {
            for (const auto& lv : pd->plain) val += layered_term_sq(lv, dt, g, t);
            std::vector<const bulk_field*> wl;
            for (const auto& f : pd->weighted.at(t.fp_exp)) wl.push_back(&f);
            val += layered_term_sq(wl, dt, g, t);
        }
        val *= amp;
        res.interior += val;
        res.interior_parts.emplace_back(t, val);
    }
    for (const boundary_term& bt : energy_boundary_terms(base, l)) {
        std::vector<Real> pk = combine_interface(psi.levels, dt, bt.k, g.nh());
        Real val = sigma * amp * sqr(interface_sobolev(pk, g, bt.sobolev));
        res.boundary += val;
        res.boundary_parts.emplace_back(bt, val);
    }
    res.value = res.interior + res.boundary;
    return res;
}

embedding_report embedding_spot_check(const slab_grid& g) {
    embedding_report rep;
    auto add = [&](const std::string& label, const std::function<Real(Real, Real, Real)>& fn) {
        bulk_field f = bulk_field::sample(g, phase_id::plus, fn);
        embedding_sample s;
        s.label = label;
        for (Real x : f.v) s.sup_norm = std::max(s.sup_norm, std::abs(x));
        s.star3 = anisotropic_norm(f, g, 3);
        s.iso3 = isotropic_norm(f, g, 3);
        s.ratio = s.sup_norm / s.star3;
        rep.max_ratio = std::max(rep.max_ratio, s.ratio);
        rep.samples.push_back(std::move(s));
    };
    add("const", [](Real, Real, Real) { return 1.0; });
    for (int k : {1, 2, 4, 8})
        add("wave k=" + std::to_string(k),
            [k](Real x1, Real, Real) { return std::sin(k * x1); });
    for (Real delta : {0.5, 0.1, 0.02}) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "layer delta=%g", delta);
        add(buf, [delta](Real, Real, Real z) { return std::exp(-z / delta); });
    }
    return rep;
}

}  // namespace cvsheet
