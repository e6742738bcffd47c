#include "cvsheet/geometry.hpp"

#include "cvsheet/fft.hpp"

#include <algorithm>

namespace cvsheet {

namespace {

std::vector<Real> poly_derivative(const std::vector<Real>& c) {
    if (c.size() <= 1) return {0.0};
    std::vector<Real> d(c.size() - 1);
    for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = c[i] * static_cast<Real>(i);
    return d;
}

Real poly_eval(const std::vector<Real>& c, Real t) {
    Real y = 0;
    for (std::size_t i = c.size(); i-- > 0;) y = y * t + c[i];
    return y;
}

Real binom(int n, int k) {
    Real r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

slab_grid slab_grid::make(int d, Real H, int Nh, int Nv) {
    if (d != 2 && d != 3) throw invalid_argument_error("slab_grid: d must be 2 or 3");
    if (!(H > 10.0)) throw invalid_argument_error("slab_grid: H must exceed 10");
    if (Nh < 4 || Nv < 4) throw invalid_argument_error("slab_grid: Nh and Nv must be >= 4");
    slab_grid g;
    g.d = d;
    g.H = H;
    g.Nh = Nh;
    g.Nv = Nv;
    g.n1 = Nh;
    g.n2 = (d == 3) ? Nh : 1;
    g.xh.resize(static_cast<std::size_t>(Nh));
    for (int i = 0; i < Nh; ++i) g.xh[i] = 2.0 * pi * i / Nh;
    g.zplus = lobatto_nodes(Nv, 0.0, H);
    g.zminus = lobatto_nodes(Nv, 0.0, -H);
    return g;
}

cutoff_function build_cutoff(Real H, Real psi0_sup) {
    if (!(H > 10.0)) throw invalid_argument_error("build_cutoff: H must exceed 10");
    if (psi0_sup < 0.0 || psi0_sup > 1.0)
        throw invalid_argument_error("build_cutoff: psi0_sup must lie in [0, 1]");

    cutoff_function c;
    c.H = H;
    c.psi0_sup = psi0_sup;
    c.r = H - 1.0;
    c.w = H - 2.0;
    c.slope_target = 1.0 / (psi0_sup + 20.0);

    // sup |chi'| = 1 / (w (1 - m)); wide ramps keep the higher derivatives
    // (and hence the Chebyshev resolution of anything built on chi) tame, so
    // take most of the slope budget.  When the bound is unattainable there is
    // no budget to respect and conditioning wins outright.
    const Real m_max = 1.0 - (psi0_sup + 20.0) / c.w;
    Real m;
    if (m_max > 0.0) {
        m = std::clamp(0.8 * m_max, std::min(0.02, m_max), 0.45);
    } else {
        m = 0.30;
    }
    c.m = m;
    c.a = 1.0 / (c.w * (1.0 - m));
    c.ramp_fraction = m;
    c.slope_achieved = c.a;
    c.slope_bound_met = c.a <= c.slope_target * (1.0 + 1e-12);

    // degree-17 smoothstep: C^8 ramp with one order to spare, so the exposed
    // derivatives (through 8) are continuous across every junction and the
    // Chebyshev tails of fields built on chi decay one power faster
    const int N = 8;
    std::vector<Real> s(2 * N + 2, 0.0);
    for (int k = 0; k <= N; ++k) {
        Real coef = binom(N + k, k) * binom(2 * N + 1, N - k);
        if (k % 2 == 1) coef = -coef;
        s[static_cast<std::size_t>(N + 1 + k)] = coef;
    }
    c.sder.resize(9);
    c.sder[0] = s;
    for (int p = 1; p <= 8; ++p) c.sder[p] = poly_derivative(c.sder[p - 1]);
    c.q.assign(s.size() + 1, 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) c.q[i + 1] = s[i] / static_cast<Real>(i + 1);
    return c;
}

Real cutoff_function::eval(Real x3, int order) const {
    if (order < 0 || order > 8)
        throw invalid_argument_error("cutoff_function: derivative order must be in 0..8");
    const Real x = std::abs(x3);
    if (x <= 1.0) return order == 0 ? 1.0 : 0.0;
    if (x >= r) return 0.0;
    const Real u = (x - 1.0) / w;
    const Real sgn = (x3 < 0.0) ? -1.0 : 1.0;
    if (order == 0) {
        Real I;
        if (u <= m)
            I = m * poly_eval(q, u / m);
        else if (u <= 1.0 - m)
            I = 0.5 * m + (u - m);
        else
            I = 1.0 - m - m * poly_eval(q, (1.0 - u) / m);
        return 1.0 - a * w * I;
    }
    const int p = order - 1;
    Real plat;
    if (u <= m)
        plat = poly_eval(sder[static_cast<std::size_t>(p)], u / m) / std::pow(m, p);
    else if (u <= 1.0 - m)
        plat = (p == 0) ? 1.0 : 0.0;
    else
        plat = poly_eval(sder[static_cast<std::size_t>(p)], (1.0 - u) / m) *
               ((p % 2 == 0) ? 1.0 : -1.0) / std::pow(m, p);
    Real val = -a * plat / std::pow(w, p);
    if (order % 2 == 1 && sgn < 0.0) val = -val;  // chi is even
    return val;
}

std::vector<Real> cutoff_function::table(const std::vector<Real>& z, int order) const {
    std::vector<Real> t(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) t[i] = eval(z[i], order);
    return t;
}

Real cutoff_function::sum_sup_derivatives() const {
    Real total = 1.0;  // order 0
    for (int j = 1; j <= 8; ++j) {
        const int p = j - 1;
        Real mp = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            Real t = static_cast<Real>(i) / 2000.0;
            mp = std::max(mp, std::abs(poly_eval(sder[static_cast<std::size_t>(p)], t)));
        }
        total += a * mp / std::pow(m * w, p);
    }
    return total;
}

bulk_field bulk_field::zeros(const slab_grid& g, phase_id p) {
    bulk_field f;
    f.phase = p;
    f.n1 = g.n1;
    f.n2 = g.n2;
    f.nv = g.nvert();
    f.v.assign(g.bulk_size(), 0.0);
    return f;
}

bulk_field bulk_field::sample(const slab_grid& g, phase_id p,
                              const std::function<Real(Real, Real, Real)>& fn) {
    bulk_field f = zeros(g, p);
    const auto& z = g.z(p);
    for (int j = 0; j < f.nv; ++j)
        for (int i1 = 0; i1 < g.n1; ++i1)
            for (int i2 = 0; i2 < g.n2; ++i2)
                f.at(j, i1, i2) = fn(g.xh[i1], g.n2 > 1 ? g.xh[i2] : 0.0, z[j]);
    return f;
}

std::vector<Real> ih_derivative(const std::vector<Real>& f, const slab_grid& g, int axis) {
    if (static_cast<int>(f.size()) != g.nh())
        throw grid_mismatch_error("ih_derivative: wrong interface size");
    if (axis == 1 && g.d == 2) return std::vector<Real>(f.size(), 0.0);
    std::vector<Real> df(f.size());
    fft::derivative(f.data(), df.data(), g.n1, g.n2, axis, 1);
    return df;
}

flattened_geometry flatten(const slab_grid& g, const cutoff_function& chi,
                           std::vector<Real> psi, std::vector<Real> psi_t,
                           Real jacobian_safety) {
    if (static_cast<int>(psi.size()) != g.nh())
        throw grid_mismatch_error("flatten: psi size does not match the grid");
    if (!psi_t.empty() && psi_t.size() != psi.size())
        throw grid_mismatch_error("flatten: psi_t size does not match psi");
    if (std::abs(chi.H - g.H) > 1e-12)
        throw grid_mismatch_error("flatten: cutoff was built for a different H");

    flattened_geometry geo;
    geo.grid = g;
    geo.chi = chi;
    geo.psi = std::move(psi);
    geo.psi_t = std::move(psi_t);
    geo.dpsi1 = ih_derivative(geo.psi, g, 0);
    geo.dpsi2 = (g.d == 3) ? ih_derivative(geo.psi, g, 1)
                           : std::vector<Real>(geo.psi.size(), 0.0);
    geo.sup_psi = 0;
    for (Real p : geo.psi) geo.sup_psi = std::max(geo.sup_psi, std::abs(p));
    if (geo.sup_psi >= 10.0)
        throw invalid_argument_error("flatten: sup |psi| must stay below 10");

    geo.min_jacobian = 1e300;
    for (phase_id ph : {phase_id::plus, phase_id::minus}) {
        const auto& z = g.z(ph);
        auto c0 = chi.table(z, 0);
        auto c1 = chi.table(z, 1);
        bulk_field phi = bulk_field::zeros(g, ph);
        bulk_field jac = bulk_field::zeros(g, ph);
        bulk_field d1 = bulk_field::zeros(g, ph);
        bulk_field d2 = bulk_field::zeros(g, ph);
        bulk_field pt = bulk_field::zeros(g, ph);
        const int nh = g.nh();
        for (int j = 0; j < g.nvert(); ++j) {
            for (int i = 0; i < nh; ++i) {
                const std::size_t idx = static_cast<std::size_t>(j) * nh + i;
                phi.v[idx] = z[j] + c0[j] * geo.psi[i];
                jac.v[idx] = 1.0 + c1[j] * geo.psi[i];
                d1.v[idx] = c0[j] * geo.dpsi1[i];
                d2.v[idx] = c0[j] * geo.dpsi2[i];
                pt.v[idx] = geo.psi_t.empty() ? 0.0 : c0[j] * geo.psi_t[i];
                geo.min_jacobian = std::min(geo.min_jacobian, jac.v[idx]);
            }
        }
        if (ph == phase_id::plus) {
            geo.phi_p = std::move(phi);
            geo.jac_p = std::move(jac);
            geo.dphi1_p = std::move(d1);
            geo.dphi2_p = std::move(d2);
            geo.phit_p = std::move(pt);
        } else {
            geo.phi_m = std::move(phi);
            geo.jac_m = std::move(jac);
            geo.dphi1_m = std::move(d1);
            geo.dphi2_m = std::move(d2);
            geo.phit_m = std::move(pt);
        }
    }
    if (geo.min_jacobian < 0.5 * jacobian_safety)
        throw degenerate_jacobian_error("flatten: d3 phi dropped below 0.5 * safety");
    return geo;
}

namespace {

bulk_field fd2_horizontal(const bulk_field& f, const slab_grid& g, int axis) {
    bulk_field df = f;
    const int n = (axis == 0) ? g.n1 : g.n2;
    const Real h = 2.0 * pi / n;
    for (int j = 0; j < f.nv; ++j) {
        for (int i1 = 0; i1 < g.n1; ++i1) {
            for (int i2 = 0; i2 < g.n2; ++i2) {
                int ip1 = i1, im1 = i1, ip2 = i2, im2 = i2;
                if (axis == 0) {
                    ip1 = (i1 + 1) % g.n1;
                    im1 = (i1 + g.n1 - 1) % g.n1;
                } else {
                    ip2 = (i2 + 1) % g.n2;
                    im2 = (i2 + g.n2 - 1) % g.n2;
                }
                df.at(j, i1, i2) = (f.at(j, ip1, ip2) - f.at(j, im1, im2)) / (2.0 * h);
            }
        }
    }
    return df;
}

bulk_field fd2_vertical(const bulk_field& f, const slab_grid& g) {
    const auto& z = g.z(f.phase);
    bulk_field df = f;
    const int nv = f.nv;
    const int nh = g.nh();
    for (int j = 0; j < nv; ++j) {
        // centered quadratic stencil inside; cubic one-sided at the two
        // boundary rows so the boundary truncation error stays one order
        // below the interior and composed applications keep second order
        int a, len;
        if (j == 0 || j == nv - 1) {
            len = 4;
            a = (j == 0) ? 0 : nv - 4;
        } else {
            len = 3;
            a = j - 1;
        }
        Real wgt[4] = {0, 0, 0, 0};
        const Real t = z[static_cast<std::size_t>(j)];
        for (int q = 0; q < len; ++q) {
            // derivative of the Lagrange basis l_q at t
            Real num = 0;
            for (int r = 0; r < len; ++r) {
                if (r == q) continue;
                Real prod = 1;
                for (int s = 0; s < len; ++s) {
                    if (s == q || s == r) continue;
                    prod *= t - z[static_cast<std::size_t>(a + s)];
                }
                num += prod;
            }
            Real den = 1;
            for (int r = 0; r < len; ++r) {
                if (r == q) continue;
                den *= z[static_cast<std::size_t>(a + q)] - z[static_cast<std::size_t>(a + r)];
            }
            wgt[q] = num / den;
        }
        for (int i = 0; i < nh; ++i) {
            Real acc = 0;
            for (int q = 0; q < len; ++q)
                acc += wgt[q] * f.v[static_cast<std::size_t>(a + q) * nh + i];
            df.v[static_cast<std::size_t>(j) * nh + i] = acc;
        }
    }
    return df;
}

}  // namespace

bulk_field ref_derivative(const bulk_field& f, const slab_grid& g, int axis, deriv_backend be) {
    if (f.n1 != g.n1 || f.n2 != g.n2 || f.nv != g.nvert())
        throw grid_mismatch_error("ref_derivative: field does not match grid");
    if (axis == 1 && g.d == 2) return bulk_field::zeros(g, f.phase);
    if (axis == 2) {
        if (be == deriv_backend::fd2) return fd2_vertical(f, g);
        bulk_field df = f;
        dmat D = diff_matrix(g.z(f.phase));
        D.apply_block(f.v.data(), df.v.data(), g.nh());
        return df;
    }
    if (be == deriv_backend::fd2) return fd2_horizontal(f, g, axis);
    bulk_field df = f;
    fft::derivative(f.v.data(), df.v.data(), g.n1, g.n2, axis, f.nv);
    return df;
}

std::vector<bulk_field> covariant_grad(const bulk_field& f, const flattened_geometry& geo,
                                       deriv_backend be) {
    const slab_grid& g = geo.grid;
    const phase_id ph = f.phase;
    const bulk_field& J = geo.jac(ph);
    bulk_field d3 = ref_derivative(f, g, 2, be);
    std::vector<bulk_field> out;
    for (int axis = 0; axis < g.d - 1; ++axis) {
        bulk_field di = ref_derivative(f, g, axis, be);
        const bulk_field& dphi = (axis == 0) ? geo.dphi1(ph) : geo.dphi2(ph);
        for (std::size_t k = 0; k < di.v.size(); ++k)
            di.v[k] -= dphi.v[k] / J.v[k] * d3.v[k];
        out.push_back(std::move(di));
    }
    for (std::size_t k = 0; k < d3.v.size(); ++k) d3.v[k] /= J.v[k];
    out.push_back(std::move(d3));
    return out;
}

bulk_field material_derivative(const bulk_field& f_t, const bulk_field& f,
                               const std::array<bulk_field, 3>& v,
                               const flattened_geometry& geo, deriv_backend be) {
    const slab_grid& g = geo.grid;
    const phase_id ph = f.phase;
    bulk_field out = f_t;
    bulk_field d1 = ref_derivative(f, g, 0, be);
    bulk_field d3 = ref_derivative(f, g, 2, be);
    const bulk_field& J = geo.jac(ph);
    const bulk_field& A1 = geo.dphi1(ph);
    const bulk_field& A2 = geo.dphi2(ph);
    const bulk_field& pt = geo.phit(ph);
    if (g.d == 3) {
        bulk_field d2 = ref_derivative(f, g, 1, be);
        for (std::size_t k = 0; k < out.v.size(); ++k) {
            const Real vdotn = v[2].v[k] - v[0].v[k] * A1.v[k] - v[1].v[k] * A2.v[k];
            out.v[k] += v[0].v[k] * d1.v[k] + v[1].v[k] * d2.v[k] +
                        (vdotn - pt.v[k]) / J.v[k] * d3.v[k];
        }
    } else {
        for (std::size_t k = 0; k < out.v.size(); ++k) {
            const Real vdotn = v[2].v[k] - v[0].v[k] * A1.v[k];
            out.v[k] += v[0].v[k] * d1.v[k] + (vdotn - pt.v[k]) / J.v[k] * d3.v[k];
        }
    }
    return out;
}

Real volume_integral(const bulk_field& f, const slab_grid& g) {
    const Real hmeas = (2.0 * pi / g.n1) * (g.d == 3 ? 2.0 * pi / g.n2 : 1.0);
    const auto& z = g.z(f.phase);
    auto wz = clenshaw_curtis_weights(g.Nv, z.front(), z.back());
    Real s = 0;
    const int nh = g.nh();
    for (int j = 0; j < g.nvert(); ++j) {
        Real plane = 0;
        for (int i = 0; i < nh; ++i) plane += f.v[static_cast<std::size_t>(j) * nh + i];
        s += wz[j] * plane;
    }
    return s * hmeas;
}

Real interface_integral(const std::vector<Real>& f, const slab_grid& g) {
    const Real hmeas = (2.0 * pi / g.n1) * (g.d == 3 ? 2.0 * pi / g.n2 : 1.0);
    Real s = 0;
    for (Real x : f) s += x;
    return s * hmeas;
}

Real anisotropic_weight(Real z, Real H) { return (H * H - z * z) * z * z; }

bulk_field apply_tangential(const bulk_field& f, const flattened_geometry& geo,
                            const std::vector<tangential_op>& gamma, deriv_backend be) {
    const slab_grid& g = geo.grid;
    bulk_field cur = f;
    for (tangential_op op : gamma) {
        switch (op) {
            case tangential_op::dx1:
                cur = ref_derivative(cur, g, 0, be);
                break;
            case tangential_op::dx2:
                if (g.d == 2)
                    throw invalid_argument_error("apply_tangential: dx2 needs d = 3");
                cur = ref_derivative(cur, g, 1, be);
                break;
            case tangential_op::wdz: {
                cur = ref_derivative(cur, g, 2, be);
                const auto& z = g.z(f.phase);
                const int nh = g.nh();
                for (int j = 0; j < cur.nv; ++j) {
                    const Real om = anisotropic_weight(z[j], g.H);
                    for (int i = 0; i < nh; ++i)
                        cur.v[static_cast<std::size_t>(j) * nh + i] *= om;
                }
                break;
            }
        }
    }
    return cur;
}

transport_check_result transport_identity_check(
    const std::vector<Real>& times, const std::vector<flattened_geometry>& geos,
    const std::vector<bulk_field>& f_hist, const std::vector<bulk_field>& g_hist,
    const std::array<bulk_field, 3>* v, int ibp_direction) {
    const std::size_t L = times.size();
    if (L < 3 || L % 2 == 0)
        throw insufficient_history_error(
            "transport_identity_check: need an odd number of samples, at least 3");
    if (geos.size() != L || f_hist.size() != L || g_hist.size() != L)
        throw grid_mismatch_error("transport_identity_check: history lengths differ");
    const Real dt = times[1] - times[0];
    for (std::size_t k = 1; k < L; ++k)
        if (std::abs(times[k] - times[k - 1] - dt) > 1e-12 * std::max(1.0, std::abs(dt)))
            throw invalid_argument_error("transport_identity_check: nonuniform times");

    const std::size_t c = L / 2;
    const phase_id ph = f_hist[c].phase;
    const slab_grid& g = geos[c].grid;
    const flattened_geometry& geo = geos[c];
    const Real sb = (ph == phase_id::minus) ? 1.0 : -1.0;

    auto weighted_integral = [&](const bulk_field& x, const bulk_field& y,
                                 const bulk_field& wgt) {
        bulk_field prod = x;
        for (std::size_t k = 0; k < prod.v.size(); ++k) prod.v[k] = x.v[k] * y.v[k] * wgt.v[k];
        return volume_integral(prod, g);
    };

    std::vector<Real> I(L);
    for (std::size_t k = 0; k < L; ++k)
        I[k] = weighted_integral(f_hist[k], g_hist[k], geos[k].jac(ph));
    const Real dIdt = (I[c + 1] - I[c - 1]) / (2.0 * dt);

    bulk_field f_t = f_hist[c], g_t = g_hist[c];
    for (std::size_t k = 0; k < f_t.v.size(); ++k) {
        f_t.v[k] = (f_hist[c + 1].v[k] - f_hist[c - 1].v[k]) / (2.0 * dt);
        g_t.v[k] = (g_hist[c + 1].v[k] - g_hist[c - 1].v[k]) / (2.0 * dt);
    }

    bulk_field phi_t = geo.phit(ph);
    std::vector<Real> psi_t = geo.psi_t;
    if (psi_t.empty()) {
        phi_t = geos[c + 1].phi(ph);
        for (std::size_t k = 0; k < phi_t.v.size(); ++k)
            phi_t.v[k] = (phi_t.v[k] - geos[c - 1].phi(ph).v[k]) / (2.0 * dt);
        psi_t.resize(geo.psi.size());
        for (std::size_t i = 0; i < psi_t.size(); ++i)
            psi_t[i] = (geos[c + 1].psi[i] - geos[c - 1].psi[i]) / (2.0 * dt);
    }

    const bulk_field& J = geo.jac(ph);
    bulk_field d3f = ref_derivative(f_hist[c], g, 2);
    bulk_field d3g = ref_derivative(g_hist[c], g, 2);
    bulk_field fct = f_t, gct = g_t;  // covariant time derivatives
    for (std::size_t k = 0; k < fct.v.size(); ++k) {
        fct.v[k] -= phi_t.v[k] / J.v[k] * d3f.v[k];
        gct.v[k] -= phi_t.v[k] / J.v[k] * d3g.v[k];
    }

    std::vector<Real> bdry(static_cast<std::size_t>(g.nh()));
    for (int i = 0; i < g.nh(); ++i)
        bdry[i] = f_hist[c].v[i] * g_hist[c].v[i] * psi_t[i];

    transport_check_result res;
    res.transport_residual =
        std::abs(dIdt - (weighted_integral(fct, g_hist[c], J) +
                         weighted_integral(gct, f_hist[c], J) +
                         sb * interface_integral(bdry, g)));

    if (v) {
        bulk_field Dtf = material_derivative(f_t, f_hist[c], *v, geo);
        bulk_field Dtg = material_derivative(g_t, g_hist[c], *v, geo);
        auto grad0 = covariant_grad((*v)[0], geo);
        auto gradl = covariant_grad((*v)[2], geo);
        bulk_field div = grad0[0];
        for (std::size_t k = 0; k < div.v.size(); ++k)
            div.v[k] = grad0[0].v[k] + gradl.back().v[k];
        if (g.d == 3) {
            auto grad1 = covariant_grad((*v)[1], geo);
            for (std::size_t k = 0; k < div.v.size(); ++k) div.v[k] += grad1[1].v[k];
        }
        bulk_field gJ = g_hist[c];
        for (std::size_t k = 0; k < gJ.v.size(); ++k) gJ.v[k] *= J.v[k];
        res.material_residual =
            std::abs(dIdt - (weighted_integral(Dtf, g_hist[c], J) +
                             weighted_integral(Dtg, f_hist[c], J) +
                             weighted_integral(div, f_hist[c], gJ)));
    }

    // integration by parts at the center time
    {
        const int dir = ibp_direction;
        if (dir < 0 || dir >= g.d)
            throw invalid_argument_error("transport_identity_check: bad ibp direction");
        auto gf = covariant_grad(f_hist[c], geo);
        auto gg = covariant_grad(g_hist[c], geo);
        Real lhs = weighted_integral(gf[static_cast<std::size_t>(dir)], g_hist[c], J) +
                   weighted_integral(gg[static_cast<std::size_t>(dir)], f_hist[c], J);
        std::vector<Real> surf(static_cast<std::size_t>(g.nh()));
        const bool vertical = (dir == g.d - 1);
        for (int i = 0; i < g.nh(); ++i) {
            const Real Ni = vertical ? 1.0 : -(dir == 0 ? geo.dpsi1[i] : geo.dpsi2[i]);
            surf[i] = f_hist[c].v[i] * g_hist[c].v[i] * Ni;
        }
        Real B = sb * interface_integral(surf, g);
        if (vertical) {
            std::vector<Real> wall(static_cast<std::size_t>(g.nh()));
            const std::size_t off = static_cast<std::size_t>(g.Nv) * g.nh();
            for (int i = 0; i < g.nh(); ++i)
                wall[i] = f_hist[c].v[off + i] * g_hist[c].v[off + i];
            B += -sb * interface_integral(wall, g);
        }
        res.ibp_residual = std::abs(lhs - B);
    }
    return res;
}

good_unknown_result good_unknown_residual(const bulk_field& f, const flattened_geometry& geo,
                                          const std::vector<tangential_op>& gamma,
                                          deriv_backend be) {
    if (gamma.empty())
        throw invalid_argument_error("good_unknown_residual: gamma must be nonempty");
    const slab_grid& g = geo.grid;
    const phase_id ph = f.phase;
    const bulk_field& J = geo.jac(ph);

    auto T = [&](const bulk_field& x) { return apply_tangential(x, geo, gamma, be); };
    auto T_tail = [&](const bulk_field& x) {
        // everything but the innermost factor
        std::vector<tangential_op> tail(gamma.begin() + 1, gamma.end());
        return tail.empty() ? x : apply_tangential(x, geo, tail, be);
    };
    auto T_head = [&](const bulk_field& x) {
        return apply_tangential(x, geo, {gamma.front()}, be);
    };
    auto mul = [](const bulk_field& x, const bulk_field& y) {
        bulk_field z = x;
        for (std::size_t k = 0; k < z.v.size(); ++k) z.v[k] *= y.v[k];
        return z;
    };
    auto sub = [](bulk_field x, const bulk_field& y) {
        for (std::size_t k = 0; k < x.v.size(); ++k) x.v[k] -= y.v[k];
        return x;
    };

    bulk_field d3f = ref_derivative(f, g, 2, be);
    bulk_field invJ = J, invJ2 = J;
    for (std::size_t k = 0; k < J.v.size(); ++k) {
        invJ.v[k] = 1.0 / J.v[k];
        invJ2.v[k] = invJ.v[k] * invJ.v[k];
    }
    const bulk_field& phi = geo.phi(ph);
    bulk_field Tphi = T(phi);
    bulk_field Tf = T(f);
    bulk_field Td3f = T(d3f);
    bulk_field TJ = T(J);

    // good unknown and its covariant gradient
    bulk_field F = Tf;
    for (std::size_t k = 0; k < F.v.size(); ++k)
        F.v[k] -= Tphi.v[k] * d3f.v[k] * invJ.v[k];
    auto gradF = covariant_grad(F, geo, be);
    auto gradf = covariant_grad(f, geo, be);

    bulk_field comm_d3_f = sub(Td3f, ref_derivative(Tf, g, 2, be));   // [T, d3] f
    bulk_field comm_d3_phi = sub(TJ, ref_derivative(Tphi, g, 2, be)); // [T, d3] phi
    bulk_field TheadJ = T_head(J);
    // [T_tail, 1/J^2] (T_head J)
    bulk_field t4core = sub(T_tail(mul(invJ2, TheadJ)), mul(invJ2, T_tail(TheadJ)));

    good_unknown_result res;
    for (int dir = 0; dir < g.d; ++dir) {
        const bool vertical = (dir == g.d - 1);
        bulk_field Ni = bulk_field::zeros(g, ph);
        if (vertical)
            for (auto& x : Ni.v) x = 1.0;
        else {
            const bulk_field& dphi = (dir == 0) ? geo.dphi1(ph) : geo.dphi2(ph);
            for (std::size_t k = 0; k < Ni.v.size(); ++k) Ni.v[k] = -dphi.v[k];
        }

        bulk_field lhs = T(gradf[static_cast<std::size_t>(dir)]);

        bulk_field NioverJ = mul(Ni, invJ);
        // trilinear commutators [T, a, b] = T(ab) - (Ta) b - a (Tb)
        bulk_field t2 = sub(sub(T(mul(NioverJ, d3f)), mul(T(NioverJ), d3f)),
                            mul(NioverJ, Td3f));
        bulk_field t3 = sub(sub(T(mul(Ni, invJ)), mul(T(Ni), invJ)), mul(Ni, T(invJ)));
        for (std::size_t k = 0; k < t3.v.size(); ++k) t3.v[k] *= d3f.v[k];

        auto grad_dphif = covariant_grad(gradf[static_cast<std::size_t>(dir)], geo, be);
        bulk_field t1 = mul(grad_dphif.back(), Tphi);

        bulk_field rhs = gradF[static_cast<std::size_t>(dir)];
        for (std::size_t k = 0; k < rhs.v.size(); ++k) {
            rhs.v[k] += t1.v[k] + t2.v[k] + t3.v[k] -
                        Ni.v[k] * d3f.v[k] * t4core.v[k] +
                        NioverJ.v[k] * comm_d3_f.v[k] -
                        Ni.v[k] * invJ2.v[k] * d3f.v[k] * comm_d3_phi.v[k];
        }

        Real mx = 0;
        for (std::size_t k = 0; k < lhs.v.size(); ++k)
            mx = std::max(mx, std::abs(lhs.v[k] - rhs.v[k]));
        res.per_direction[static_cast<std::size_t>(dir)] = mx;
        res.residual_max = std::max(res.residual_max, mx);
    }
    return res;
}

}  // namespace cvsheet
