#include "cvsheet/dtn.hpp"

#include "cvsheet/fft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cvsheet {

namespace {

dmat transpose(const dmat& A) {
    dmat T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
    return T;
}

// |spacing| between consecutive solution nodes; orientation-free so the same
// preconditioner code serves both phases.
std::vector<Real> node_spacings(const std::vector<Real>& z) {
    std::vector<Real> h(z.size() - 1);
    for (std::size_t j = 0; j + 1 < z.size(); ++j) h[j] = std::abs(z[j + 1] - z[j]);
    return h;
}

Real dot(const std::vector<Real>& a, const std::vector<Real>& b) {
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Real norm2(const std::vector<Real>& a) { return std::sqrt(dot(a, a)); }

bulk_field zeros_like(const bulk_field& u) {
    bulk_field z;
    z.phase = u.phase;
    z.n1 = u.n1;
    z.n2 = u.n2;
    z.nv = u.nv;
    z.v.assign(u.v.size(), 0.0);
    return z;
}

// Flat-slab P1 solve per horizontal mode: FFT each unknown plane, Thomas with
// the prefactored diagonals, transform back.  Input/output live on the Nv
// eliminated planes (interface plane excluded).
std::vector<Real> flat_precondition(const std::vector<Real>& r, const elliptic_problem& prob,
                                    const std::vector<Real>& asub) {
    const int nh = prob.nh();
    const int n = prob.Nv;
    std::vector<Complex> rh(static_cast<std::size_t>(n) * nh);
    fft::forward(r.data(), rh.data(), prob.n1, prob.n2, n);
    std::vector<Complex> y(n);
    for (int ms = 0; ms < nh; ++ms) {
        const Real* l = &prob.fac_sub[static_cast<std::size_t>(ms) * n];
        const Real* dinv = &prob.fac_diag_inv[static_cast<std::size_t>(ms) * n];
        y[0] = rh[ms];
        for (int t = 1; t < n; ++t) y[t] = rh[static_cast<std::size_t>(t) * nh + ms] - l[t] * y[t - 1];
        y[n - 1] *= dinv[n - 1];
        for (int t = n - 2; t >= 0; --t) y[t] = (y[t] - asub[t + 1] * y[t + 1]) * dinv[t];
        for (int t = 0; t < n; ++t) rh[static_cast<std::size_t>(t) * nh + ms] = y[t];
    }
    std::vector<Real> out(r.size());
    fft::backward(rh.data(), out.data(), prob.n1, prob.n2, n);
    return out;
}

std::vector<Real> interior(const bulk_field& full, int nh, int Nv) {
    std::vector<Real> x(static_cast<std::size_t>(Nv) * nh);
    std::copy(full.v.begin() + nh, full.v.end(), x.begin());
    return x;
}

}  // namespace

elliptic_problem make_elliptic_problem(const flattened_geometry& geo, phase_id p) {
    const slab_grid& g = geo.grid;
    elliptic_problem prob;
    prob.d = g.d;
    prob.n1 = g.n1;
    prob.n2 = g.n2;
    prob.Nv = g.Nv;
    prob.phase = p;
    prob.H = g.H;
    prob.zsol = g.z(p);
    prob.zq = lobatto_nodes(2 * g.Nv, prob.zsol.front(), prob.zsol.back());
    prob.wq = clenshaw_curtis_weights(2 * g.Nv, prob.zsol.front(), prob.zsol.back());
    prob.Rq = resample_matrix(prob.zsol, prob.zq);
    prob.Dq = matmul(prob.Rq, diff_matrix(prob.zsol));
    prob.Rqt = transpose(prob.Rq);
    prob.Dqt = transpose(prob.Dq);

    const int nh = prob.nh();
    const int nq = prob.nq();
    const bool flat2 = g.d == 2;
    prob.cJ.resize(static_cast<std::size_t>(nq) * nh);
    prob.cp1.resize(prob.cJ.size());
    prob.cp2.resize(flat2 ? 0 : prob.cJ.size());
    prob.ce33.resize(prob.cJ.size());
    for (int q = 0; q < nq; ++q) {
        const Real chi = geo.chi.eval(prob.zq[q], 0);
        const Real chip = geo.chi.eval(prob.zq[q], 1);
        for (int i = 0; i < nh; ++i) {
            const std::size_t s = static_cast<std::size_t>(q) * nh + i;
            const Real p1 = chi * geo.dpsi1[i];
            const Real p2 = flat2 ? 0.0 : chi * geo.dpsi2[i];
            const Real J = 1.0 + chip * geo.psi[i];
            if (!(J > 0.1))
                throw degenerate_jacobian_error("make_elliptic_problem: jacobian too small");
            prob.cJ[s] = J;
            prob.cp1[s] = p1;
            if (!flat2) prob.cp2[s] = p2;
            prob.ce33[s] = (1.0 + p1 * p1 + p2 * p2) / J;
        }
    }

    // flat P1 preconditioner factors per horizontal mode, interface node
    // eliminated (Dirichlet), wall end natural
    const auto h = node_spacings(prob.zsol);
    const int n = prob.Nv;
    prob.fac_sub.assign(static_cast<std::size_t>(nh) * n, 0.0);
    prob.fac_diag_inv.assign(static_cast<std::size_t>(nh) * n, 0.0);
    for (int i1 = 0; i1 < prob.n1; ++i1) {
        for (int i2 = 0; i2 < prob.n2; ++i2) {
            const int ms = i1 * prob.n2 + i2;
            const Real k1 = fft::wavenumber(i1, prob.n1);
            const Real k2 = prob.n2 > 1 ? fft::wavenumber(i2, prob.n2) : 0.0;
            const Real kk = k1 * k1 + k2 * k2;
            Real dprev = 1.0;
            for (int t = 0; t < n; ++t) {
                const Real hl = h[t];
                const Real hr = (t + 1 < n) ? h[t + 1] : 0.0;
                Real b = 1.0 / hl + kk * hl / 2.0;
                if (t + 1 < n) b += 1.0 / hr + kk * hr / 2.0;
                Real d = b;
                if (t > 0) {
                    const Real a = -1.0 / hl;
                    const Real l = a / dprev;
                    prob.fac_sub[static_cast<std::size_t>(ms) * n + t] = l;
                    d = b - l * a;
                }
                prob.fac_diag_inv[static_cast<std::size_t>(ms) * n + t] = 1.0 / d;
                dprev = d;
            }
        }
    }
    return prob;
}

bulk_field stiffness_apply(const bulk_field& u, const elliptic_problem& prob) {
    const int nh = prob.nh();
    const int nv = prob.Nv + 1;
    const int nq = prob.nq();
    if (u.n1 != prob.n1 || u.n2 != prob.n2 || u.nv != nv)
        throw grid_mismatch_error("stiffness_apply: field does not match problem");
    const bool flat2 = prob.d == 2;
    const std::size_t bulk = static_cast<std::size_t>(nv) * nh;
    const std::size_t qbulk = static_cast<std::size_t>(nq) * nh;

    std::vector<Real> du1(bulk), du2;
    fft::derivative(u.v.data(), du1.data(), prob.n1, prob.n2, 0, nv);
    if (!flat2) {
        du2.resize(bulk);
        fft::derivative(u.v.data(), du2.data(), prob.n1, prob.n2, 1, nv);
    }

    std::vector<Real> U3q(qbulk), U1q(qbulk), U2q;
    prob.Dq.apply_block(u.v.data(), U3q.data(), nh);
    prob.Rq.apply_block(du1.data(), U1q.data(), nh);
    if (!flat2) {
        U2q.resize(qbulk);
        prob.Rq.apply_block(du2.data(), U2q.data(), nh);
    }

    // weighted fluxes at quadrature nodes
    std::vector<Real> F1(qbulk), F2, F3(qbulk);
    if (!flat2) F2.resize(qbulk);
    for (int q = 0; q < nq; ++q) {
        const Real w = prob.wq[q];
        for (int i = 0; i < nh; ++i) {
            const std::size_t s = static_cast<std::size_t>(q) * nh + i;
            const Real J = prob.cJ[s], p1 = prob.cp1[s];
            F1[s] = w * (J * U1q[s] - p1 * U3q[s]);
            if (!flat2) {
                const Real p2 = prob.cp2[s];
                F2[s] = w * (J * U2q[s] - p2 * U3q[s]);
                F3[s] = w * (-p1 * U1q[s] - p2 * U2q[s] + prob.ce33[s] * U3q[s]);
            } else {
                F3[s] = w * (-p1 * U1q[s] + prob.ce33[s] * U3q[s]);
            }
        }
    }

    bulk_field out = zeros_like(u);
    prob.Dqt.apply_block(F3.data(), out.v.data(), nh);

    std::vector<Real> G(bulk), dG(bulk);
    prob.Rqt.apply_block(F1.data(), G.data(), nh);
    fft::derivative(G.data(), dG.data(), prob.n1, prob.n2, 0, nv);
    for (std::size_t s = 0; s < bulk; ++s) out.v[s] -= dG[s];
    if (!flat2) {
        prob.Rqt.apply_block(F2.data(), G.data(), nh);
        fft::derivative(G.data(), dG.data(), prob.n1, prob.n2, 1, nv);
        for (std::size_t s = 0; s < bulk; ++s) out.v[s] -= dG[s];
    }
    return out;
}

bulk_field harmonic_extend(const std::vector<Real>& f, const elliptic_problem& prob,
                           dtn_stats* stats, Real tol, int maxit) {
    const int nh = prob.nh();
    const int Nv = prob.Nv;
    if (static_cast<int>(f.size()) != nh)
        throw grid_mismatch_error("harmonic_extend: trace size does not match grid");

    bulk_field u;
    u.phase = prob.phase;
    u.n1 = prob.n1;
    u.n2 = prob.n2;
    u.nv = Nv + 1;
    u.v.assign(static_cast<std::size_t>(Nv + 1) * nh, 0.0);
    std::copy(f.begin(), f.end(), u.v.begin());

    // eliminate the Dirichlet plane: solve A w = -K u0 on planes 1..Nv
    bulk_field Ku0 = stiffness_apply(u, prob);
    std::vector<Real> b = interior(Ku0, nh, Nv);
    for (Real& x : b) x = -x;

    const auto h = node_spacings(prob.zsol);
    std::vector<Real> asub(Nv, 0.0);
    for (int t = 1; t < Nv; ++t) asub[t] = -1.0 / h[t];

    auto apply_A = [&](const std::vector<Real>& x) {
        bulk_field w = zeros_like(u);
        std::copy(x.begin(), x.end(), w.v.begin() + nh);
        bulk_field Kw = stiffness_apply(w, prob);
        return interior(Kw, nh, Nv);
    };

    const Real bnorm = norm2(b);
    std::vector<Real> x(b.size(), 0.0);
    Real relres = 0;
    int it = 0;
    bool conv = true;
    if (bnorm > 0) {
        x = flat_precondition(b, prob, asub);
        std::vector<Real> r = apply_A(x);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
        std::vector<Real> z = flat_precondition(r, prob, asub);
        std::vector<Real> p = z;
        Real rz = dot(r, z);
        relres = norm2(r) / bnorm;
        conv = relres <= tol;
        while (!conv && it < maxit) {
            std::vector<Real> q = apply_A(p);
            const Real pq = dot(p, q);
            if (!(pq > 0)) throw solver_error("harmonic_extend: form lost definiteness");
            const Real alpha = rz / pq;
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * p[i];
            for (std::size_t i = 0; i < r.size(); ++i) r[i] -= alpha * q[i];
            ++it;
            relres = norm2(r) / bnorm;
            if (relres <= tol) {
                conv = true;
                break;
            }
            z = flat_precondition(r, prob, asub);
            const Real rz_new = dot(r, z);
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = z[i] + (rz_new / rz) * p[i];
            rz = rz_new;
        }
    }
    if (stats) {
        stats->iterations = it;
        stats->relative_residual = relres;
        stats->converged = conv;
    }
    if (!conv) {
        char msg[128];
        std::snprintf(msg, sizeof msg,
                      "harmonic_extend: no convergence in %d iterations, residual %.3e", maxit,
                      relres);
        throw solver_error(msg);
    }
    std::copy(x.begin(), x.end(), u.v.begin() + nh);
    return u;
}

dtn_operator make_dtn_operator(const flattened_geometry& geo, phase_id p, Real tol, int maxit) {
    return dtn_operator{make_elliptic_problem(geo, p), tol, maxit};
}

std::vector<Real> dtn_apply_nodal(const std::vector<Real>& f, const dtn_operator& op,
                                  dtn_stats* stats) {
    bulk_field u = harmonic_extend(f, op.prob, stats, op.tol, op.maxit);
    bulk_field Ku = stiffness_apply(u, op.prob);
    return std::vector<Real>(Ku.v.begin(), Ku.v.begin() + op.prob.nh());
}

spectral_field dtn_apply(const spectral_field& f, const dtn_operator& op, dtn_stats* stats) {
    if (f.d != op.prob.d || f.n1 != op.prob.n1 || f.n2 != op.prob.n2)
        throw grid_mismatch_error("dtn_apply: field does not match operator grid");
    std::vector<Real> g = dtn_apply_nodal(f.values(), op, stats);
    return spectral_field::from_values(g, f.d, f.n1, f.n2);
}

spectral_field zero_freq_project(spectral_field f) {
    f.at(0, 0) = Complex(0.0);
    return f;
}

spectral_field dtn_inverse(const spectral_field& h, const dtn_operator& plus,
                           const dtn_operator& minus, dtn_stats* stats, Real tol, int maxit) {
    const elliptic_problem& pp = plus.prob;
    if (h.d != pp.d || h.n1 != pp.n1 || h.n2 != pp.n2 || minus.prob.n1 != pp.n1 ||
        minus.prob.n2 != pp.n2 || minus.prob.d != pp.d)
        throw grid_mismatch_error("dtn_inverse: grids do not agree");
    // applied operators are mean-zero only to solver tolerance, so the gate
    // is relative rather than exact
    const Real hnorm = h.l2_norm();
    if (std::abs(h.at(0, 0)) > 1e-8 * std::max(Real(1), hnorm))
        throw not_mean_zero_error("dtn_inverse: right side has a nonzero mean");

    dtn_operator ip = plus, im = minus;
    ip.tol = im.tol = std::min(Real(1e-10), 0.01 * tol);

    const int nh = pp.nh();
    auto apply_N = [&](const std::vector<Real>& g) {
        std::vector<Real> out = dtn_apply_nodal(g, ip, nullptr);
        std::vector<Real> lo = dtn_apply_nodal(g, im, nullptr);
        Real mean = 0;
        for (int i = 0; i < nh; ++i) {
            out[i] += lo[i];
            mean += out[i];
        }
        mean /= nh;
        for (Real& x : out) x -= mean;
        return out;
    };
    auto precond = [&](const std::vector<Real>& r) {
        std::vector<Complex> rh(nh);
        fft::forward(r.data(), rh.data(), pp.n1, pp.n2, 1);
        for (int i1 = 0; i1 < pp.n1; ++i1)
            for (int i2 = 0; i2 < pp.n2; ++i2) {
                const int ms = i1 * pp.n2 + i2;
                const Real k1 = fft::wavenumber(i1, pp.n1);
                const Real k2 = pp.n2 > 1 ? fft::wavenumber(i2, pp.n2) : 0.0;
                const Real kk = std::sqrt(k1 * k1 + k2 * k2);
                rh[ms] = kk > 0 ? rh[ms] / (2.0 * kk * std::tanh(pp.H * kk)) : Complex(0.0);
            }
        std::vector<Real> out(nh);
        fft::backward(rh.data(), out.data(), pp.n1, pp.n2, 1);
        return out;
    };

    std::vector<Real> b = h.values();
    {
        Real mean = 0;
        for (Real x : b) mean += x;
        mean /= nh;
        for (Real& x : b) x -= mean;
    }
    const Real bnorm = norm2(b);
    std::vector<Real> x(nh, 0.0);
    Real relres = 0;
    int it = 0;
    bool conv = true;
    if (bnorm > 0) {
        x = precond(b);
        std::vector<Real> r = apply_N(x);
        for (int i = 0; i < nh; ++i) r[i] = b[i] - r[i];
        std::vector<Real> z = precond(r);
        std::vector<Real> p = z;
        Real rz = dot(r, z);
        relres = norm2(r) / bnorm;
        conv = relres <= tol;
        while (!conv && it < maxit) {
            std::vector<Real> q = apply_N(p);
            const Real pq = dot(p, q);
            if (!(pq > 0)) throw solver_error("dtn_inverse: operator lost definiteness");
            const Real alpha = rz / pq;
            for (int i = 0; i < nh; ++i) x[i] += alpha * p[i];
            for (int i = 0; i < nh; ++i) r[i] -= alpha * q[i];
            ++it;
            relres = norm2(r) / bnorm;
            if (relres <= tol) {
                conv = true;
                break;
            }
            z = precond(r);
            const Real rz_new = dot(r, z);
            for (int i = 0; i < nh; ++i) p[i] = z[i] + (rz_new / rz) * p[i];
            rz = rz_new;
        }
    }
    if (stats) {
        stats->iterations = it;
        stats->relative_residual = relres;
        stats->converged = conv;
    }
    if (!conv) {
        char msg[128];
        std::snprintf(msg, sizeof msg, "dtn_inverse: no convergence in %d iterations, residual %.3e",
                      maxit, relres);
        throw solver_error(msg);
    }
    return zero_freq_project(spectral_field::from_values(x, h.d, h.n1, h.n2));
}

paralin_report paralinearization_residual(const spectral_field& psi, Real H,
                                          const std::vector<int>& freqs, int Nv, Real tol,
                                          std::array<int, 2> dir) {
    if (freqs.empty()) throw invalid_argument_error("paralinearization_residual: no frequencies");
    if (dir[0] == 0 && dir[1] == 0)
        throw invalid_argument_error("paralinearization_residual: zero direction");
    const int d = psi.d;
    if (d == 2 && dir[1] != 0)
        throw invalid_argument_error("paralinearization_residual: x2 direction needs d = 3");

    const Real dlen = std::sqrt(Real(dir[0] * dir[0] + dir[1] * dir[1]));
    pl_cutoffs pl;
    paralin_report rep;
    for (int k : freqs) {
        // Grid sized per frequency: the paradifferential band check needs
        // (1 + eps2) k |dir| clear of the Nyquist radius.
        int n1 = std::max({psi.n1, psi.n2,
                           2 * static_cast<int>(std::ceil((1 + pl.eps2) * k * dlen)) + 8});
        n1 += n1 % 2;
        slab_grid g = slab_grid::make(d, H, n1, Nv);
        spectral_field psif =
            (psi.n1 == g.n1 && psi.n2 == g.n2) ? psi : pad_modes(psi, g.n1, g.n2);
        std::vector<Real> psin = psif.values();
        Real sup = 0;
        for (Real v : psin) sup = std::max(sup, std::abs(v));
        flattened_geometry geo = flatten(g, build_cutoff(H, sup), psin);
        dtn_operator Np = make_dtn_operator(geo, phase_id::plus, tol);
        dtn_operator Nm = make_dtn_operator(geo, phase_id::minus, tol);

        symbol full_p = symbol_dtn(psif, +1);
        symbol lam = full_p;
        lam.subprincipal = nullptr;

        spectral_field f(d, g.n1, g.n2);
        f.at(k * dir[0], k * dir[1]) = Real(0.5);
        f.at(-k * dir[0], -k * dir[1]) = Real(0.5);
        spectral_field np = dtn_apply(f, Np);
        spectral_field nm = dtn_apply(f, Nm);
        spectral_field tl = para_apply(lam, f, pl);
        spectral_field tf = para_apply(full_p, f, pl);

        auto diff_norm = [](const spectral_field& a, const spectral_field& b) {
            Real s = 0;
            for (std::size_t i = 0; i < a.c.size(); ++i) s += std::norm(a.c[i] - b.c[i]);
            return std::sqrt(s);
        };
        rep.freqs.push_back(k);
        rep.dtn_norm.push_back(np.l2_norm());
        rep.residual_norm.push_back(diff_norm(np, tl));
        rep.sub_residual_norm.push_back(diff_norm(np, tf));
        rep.difference_norm.push_back(diff_norm(np, nm));
    }
    rep.dtn_slope = log_log_slope(rep.freqs, rep.dtn_norm);
    rep.residual_slope = log_log_slope(rep.freqs, rep.residual_norm);
    rep.sub_residual_slope = log_log_slope(rep.freqs, rep.sub_residual_norm);
    rep.difference_slope = log_log_slope(rep.freqs, rep.difference_norm);
    return rep;
}

}  // namespace cvsheet
