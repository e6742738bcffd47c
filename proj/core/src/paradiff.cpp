#include "cvsheet/paradiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cvsheet/fft.hpp"

namespace cvsheet {

namespace {

Real half_bump(Real t) { return t <= 0 ? Real(0) : std::exp(-1 / t); }

// C^inf ramp, 0 for t <= 0 and 1 for t >= 1.
Real ramp(Real t) {
    if (t <= 0) return 0;
    if (t >= 1) return 1;
    Real a = half_bump(t);
    Real b = half_bump(1 - t);
    return a / (a + b);
}

int nyquist_radius(const spectral_field& u) {
    int r = u.n1 / 2;
    if (u.n2 > 1) r = std::min(r, u.n2 / 2);
    return r;
}

void check_same_grid(const spectral_field& a, const spectral_field& b, const char* who) {
    if (a.d != b.d || a.n1 != b.n1 || a.n2 != b.n2)
        throw grid_mismatch_error(std::string(who) + ": fields live on different grids");
}

}  // namespace

spectral_field::spectral_field(int d_, int n1_, int n2_) : d(d_), n1(n1_), n2(n2_) {
    if (d < 2 || d > 3) throw invalid_argument_error("spectral_field: d must be 2 or 3");
    if (d == 2 && n2 != 1) throw invalid_argument_error("spectral_field: 2D needs n2 == 1");
    if (n1 < 2 || n2 < 1) throw invalid_argument_error("spectral_field: grid too small");
    c.assign(static_cast<std::size_t>(n1) * n2, Complex(0));
}

spectral_field spectral_field::from_values(const std::vector<Real>& vals, int d, int n1, int n2) {
    spectral_field u(d, n1, n2);
    if (vals.size() != u.size())
        throw grid_mismatch_error("spectral_field::from_values: value count mismatch");
    fft::forward(vals.data(), u.c.data(), n1, n2);
    return u;
}

std::vector<Real> spectral_field::values() const {
    std::vector<Real> out(size());
    fft::backward(c.data(), out.data(), n1, n2);
    return out;
}

std::array<int, 2> spectral_field::wavenumber(std::size_t slot) const {
    int i1 = static_cast<int>(slot) / n2;
    int i2 = static_cast<int>(slot) % n2;
    return {fft::wavenumber(i1, n1), fft::wavenumber(i2, n2)};
}

Complex& spectral_field::at(int k1, int k2) {
    if (2 * std::abs(k1) > n1 || 2 * std::abs(k2) > n2)
        throw invalid_argument_error("spectral_field::at: mode outside the grid");
    int i1 = (k1 % n1 + n1) % n1;
    int i2 = (k2 % n2 + n2) % n2;
    return c[static_cast<std::size_t>(i1) * n2 + i2];
}

Complex spectral_field::at(int k1, int k2) const {
    return const_cast<spectral_field*>(this)->at(k1, k2);
}

Real spectral_field::hermitian_defect() const {
    Real worst = 0;
    for (std::size_t s = 0; s < size(); ++s) {
        auto [k1, k2] = wavenumber(s);
        worst = std::max(worst, std::abs(c[s] - std::conj(at(-k1, -k2))));
    }
    return worst;
}

Real spectral_field::l2_norm() const {
    Real s = 0;
    for (const auto& z : c) s += std::norm(z);
    return std::sqrt(s);
}

Real spectral_field::sobolev_norm(Real sexp) const {
    Real s = 0;
    for (std::size_t slot = 0; slot < size(); ++slot) {
        auto [k1, k2] = wavenumber(slot);
        s += std::pow(Real(1) + k1 * k1 + k2 * k2, sexp) * std::norm(c[slot]);
    }
    return std::sqrt(s);
}

Real spectral_field::max_abs() const {
    Real m = 0;
    for (Real v : values()) m = std::max(m, std::abs(v));
    return m;
}

Real band_limit(const spectral_field& u, Real rel_tol) {
    Real cmax = 0;
    for (const auto& z : u.c) cmax = std::max(cmax, std::abs(z));
    if (cmax == 0) return 0;
    Real bl = 0;
    for (std::size_t s = 0; s < u.size(); ++s) {
        if (std::abs(u.c[s]) <= rel_tol * cmax) continue;
        auto [k1, k2] = u.wavenumber(s);
        bl = std::max(bl, std::hypot(Real(k1), Real(k2)));
    }
    return bl;
}

spectral_field pad_modes(const spectral_field& u, int N1, int N2) {
    if (N1 < u.n1 || N2 < u.n2) throw invalid_argument_error("pad_modes: target grid smaller");
    spectral_field out(u.d, N1, N2);
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto [k1, k2] = u.wavenumber(s);
        out.at(k1, k2) += u.c[s];
    }
    return out;
}

spectral_field truncate_modes(const spectral_field& u, int N1, int N2) {
    if (N1 > u.n1 || N2 > u.n2) throw invalid_argument_error("truncate_modes: target grid larger");
    spectral_field out(u.d, N1, N2);
    for (std::size_t s = 0; s < out.size(); ++s) {
        auto [k1, k2] = out.wavenumber(s);
        // Skip the split Nyquist pair: both halves of the fine grid map there.
        if (2 * std::abs(k1) == N1 && N1 < u.n1)
            out.c[s] = u.at(k1, k2) + u.at(-k1, k2);
        else if (u.n2 > 1 && 2 * std::abs(k2) == N2 && N2 < u.n2)
            out.c[s] = u.at(k1, k2) + u.at(k1, -k2);
        else
            out.c[s] = u.at(k1, k2);
    }
    return out;
}

Real pl_cutoffs::Theta(Real r) const {
    if (r <= 1) return 1;
    if (r >= 2) return 0;
    return 1 - ramp(r - 1);
}

Real pl_cutoffs::low_pass(int m, Real r) const {
    if (m < 0) return 0;
    return Theta(std::ldexp(r, -m));
}

Real pl_cutoffs::band(int k, Real r) const {
    if (k < 0) return 0;
    if (k == 0) return Theta(r);
    return low_pass(k, r) - low_pass(k - 1, r);
}

Real pl_cutoffs::chi(Real theta_norm, Real eta_norm) const {
    if (eta_norm <= 0) return theta_norm <= 0 ? Real(1) : Real(0);
    Real ratio = theta_norm / eta_norm;
    if (ratio <= eps1) return 1;
    if (ratio >= eps2) return 0;
    return 1 - ramp((ratio - eps1) / (eps2 - eps1));
}

Complex symbol::eval(const Xpt& x, const Freq& xi) const {
    Complex v = principal(x, xi);
    if (subprincipal) v += subprincipal(x, xi);
    return v;
}

Complex symbol::eval_subprincipal(const Xpt& x, const Freq& xi) const {
    return subprincipal ? subprincipal(x, xi) : Complex(0);
}

interface_jet::interface_jet(const spectral_field& psi, Real drop_tol) : d_(psi.d) {
    Real cmax = 0;
    for (const auto& z : psi.c) cmax = std::max(cmax, std::abs(z));
    for (std::size_t s = 0; s < psi.size(); ++s) {
        if (std::abs(psi.c[s]) <= drop_tol * cmax) continue;
        auto [k1, k2] = psi.wavenumber(s);
        terms_.push_back({Real(k1), Real(k2), psi.c[s]});
    }
}

Real interface_jet::value(const Xpt& x) const {
    Real v = 0;
    for (const auto& t : terms_) {
        Real ph = t.k1 * x[0] + t.k2 * x[1];
        v += (t.a * Complex(std::cos(ph), std::sin(ph))).real();
    }
    return v;
}

std::array<Real, 2> interface_jet::grad(const Xpt& x) const {
    std::array<Real, 2> g{0, 0};
    for (const auto& t : terms_) {
        Real ph = t.k1 * x[0] + t.k2 * x[1];
        Complex w = t.a * Complex(std::cos(ph), std::sin(ph));
        g[0] -= t.k1 * w.imag();  // Re(i k w) = -k Im w
        g[1] -= t.k2 * w.imag();
    }
    return g;
}

std::array<Real, 3> interface_jet::hess(const Xpt& x) const {
    std::array<Real, 3> h{0, 0, 0};
    for (const auto& t : terms_) {
        Real ph = t.k1 * x[0] + t.k2 * x[1];
        Real re = (t.a * Complex(std::cos(ph), std::sin(ph))).real();
        h[0] -= t.k1 * t.k1 * re;
        h[1] -= t.k1 * t.k2 * re;
        h[2] -= t.k2 * t.k2 * re;
    }
    return h;
}

spectral_field lp_project(const spectral_field& u, int k, const pl_cutoffs& pl) {
    spectral_field out(u.d, u.n1, u.n2);
    if (k < 0) return out;
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto [k1, k2] = u.wavenumber(s);
        out.c[s] = pl.band(k, std::hypot(Real(k1), Real(k2))) * u.c[s];
    }
    return out;
}

namespace {

// Everything the closed-form symbols need at one (x', xi).
struct jet_eval {
    std::array<Real, 2> P;
    std::array<Real, 3> Q;  // hessian 11, 12, 22
    Real g = 1, Pxi = 0, xi2 = 0, lam = 0, trQ = 0;
    std::array<Real, 2> Qxi{};    // column_j(Q) . xi
    std::array<Real, 2> PQ{};     // P . column_j(Q)
    std::array<Real, 2> Qdiag{};  // Q_jj
    std::array<Real, 2> dxi_lam{}, dx_lam{};
    std::array<Real, 2> xi{};
};

jet_eval make_eval(const interface_jet& J, const Xpt& x, const Freq& xi) {
    jet_eval e;
    e.P = J.grad(x);
    e.Q = J.hess(x);
    e.xi = xi;
    e.g = 1 + e.P[0] * e.P[0] + e.P[1] * e.P[1];
    e.Pxi = e.P[0] * xi[0] + e.P[1] * xi[1];
    e.xi2 = xi[0] * xi[0] + xi[1] * xi[1];
    e.lam = std::sqrt(e.g * e.xi2 - e.Pxi * e.Pxi);
    e.trQ = e.Q[0] + e.Q[2];
    e.Qxi = {e.Q[0] * xi[0] + e.Q[1] * xi[1], e.Q[1] * xi[0] + e.Q[2] * xi[1]};
    e.PQ = {e.P[0] * e.Q[0] + e.P[1] * e.Q[1], e.P[0] * e.Q[1] + e.P[1] * e.Q[2]};
    e.Qdiag = {e.Q[0], e.Q[2]};
    for (int j = 0; j < 2; ++j) {
        e.dxi_lam[j] = (e.g * xi[j] - e.Pxi * e.P[j]) / e.lam;
        e.dx_lam[j] = (e.PQ[j] * e.xi2 - e.Pxi * e.Qxi[j]) / e.lam;
    }
    return e;
}

// d_{x_j} of dxi_lam[j], before summing over j.
Real dxj_dxij_lam(const jet_eval& e, int j) {
    Real num = 2 * e.PQ[j] * e.xi[j] - e.Qxi[j] * e.P[j] - e.Pxi * e.Qdiag[j];
    return (num - e.dxi_lam[j] * e.dx_lam[j]) / e.lam;
}

Real div_mixed_lam(const jet_eval& e) { return dxj_dxij_lam(e, 0) + dxj_dxij_lam(e, 1); }

Complex lambda0_minus(const jet_eval& e) {
    Complex alpha(e.lam / e.g, e.Pxi / e.g);
    std::array<Complex, 2> dx_alpha;
    for (int j = 0; j < 2; ++j)
        dx_alpha[j] = (Complex(e.dx_lam[j], e.Qxi[j]) - alpha * (2 * e.PQ[j])) / e.g;
    Complex div_a_gradpsi = dx_alpha[0] * e.P[0] + dx_alpha[1] * e.P[1] + alpha * e.trQ;
    Complex transport = e.dxi_lam[0] * dx_alpha[0] + e.dxi_lam[1] * dx_alpha[1];
    return (e.g / (2 * e.lam)) * (div_a_gradpsi + Complex(0, 1) * transport);
}

Real h2_of(const jet_eval& e) { return e.lam * e.lam / std::pow(e.g, Real(1.5)); }

std::array<Real, 2> dxi_h2(const jet_eval& e) {
    Real w = 2 / std::pow(e.g, Real(1.5));
    return {w * (e.g * e.xi[0] - e.Pxi * e.P[0]), w * (e.g * e.xi[1] - e.Pxi * e.P[1])};
}

std::array<Real, 2> dx_h2(const jet_eval& e) {
    std::array<Real, 2> out;
    for (int j = 0; j < 2; ++j)
        out[j] = 2 * e.lam * e.dx_lam[j] / std::pow(e.g, Real(1.5)) -
                 3 * e.lam * e.lam * e.PQ[j] / std::pow(e.g, Real(2.5));
    return out;
}

Real div_mixed_h2(const jet_eval& e) {
    Real s = 0;
    for (int j = 0; j < 2; ++j) {
        Real num = 2 * e.PQ[j] * e.xi[j] - e.Qxi[j] * e.P[j] - e.Pxi * e.Qdiag[j];
        s += 2 * (num - 3 * e.lam * e.dxi_lam[j] * e.PQ[j] / e.g) / std::pow(e.g, Real(1.5));
    }
    return s;
}

const Real sqrt2 = std::sqrt(Real(2));

Real m15_of(const jet_eval& e) { return sqrt2 * std::pow(e.lam, Real(1.5)) * std::pow(e.g, Real(-0.75)); }

std::array<Real, 2> dxi_m15(const jet_eval& e) {
    Real w = Real(1.5) * sqrt2 * std::sqrt(e.lam) * std::pow(e.g, Real(-0.75));
    return {w * e.dxi_lam[0], w * e.dxi_lam[1]};
}

std::array<Real, 2> dx_m15(const jet_eval& e) {
    std::array<Real, 2> out;
    Real w = Real(1.5) * sqrt2 * std::sqrt(e.lam) * std::pow(e.g, Real(-0.75));
    for (int j = 0; j < 2; ++j) out[j] = w * (e.dx_lam[j] - e.lam * e.PQ[j] / e.g);
    return out;
}

Real div_mixed_m15(const jet_eval& e) {
    Real s = 0;
    Real w = Real(1.5) * sqrt2 * std::pow(e.g, Real(-0.75));
    for (int j = 0; j < 2; ++j) {
        Real num = 2 * e.PQ[j] * e.xi[j] - e.Qxi[j] * e.P[j] - e.Pxi * e.Qdiag[j];
        s += w / std::sqrt(e.lam) *
             (num - Real(0.5) * e.dxi_lam[j] * e.dx_lam[j] - Real(1.5) * e.lam * e.PQ[j] * e.dxi_lam[j] / e.g);
    }
    return s;
}

Real n0_of(Real g) { return std::pow(Real(2), Real(-1) / 3) * std::pow(g, Real(-0.25)); }

std::shared_ptr<const interface_jet> share_jet(const spectral_field& psi) {
    return std::make_shared<interface_jet>(psi);
}

bool is_flat(const spectral_field& psi) {
    Real cmax = 0;
    for (const auto& z : psi.c) cmax = std::max(cmax, std::abs(z));
    for (std::size_t s = 0; s < psi.size(); ++s) {
        auto [k1, k2] = psi.wavenumber(s);
        if ((k1 != 0 || k2 != 0) && std::abs(psi.c[s]) > 1e-14 * cmax) return false;
    }
    return true;
}

}  // namespace

Real dtn_subprincipal_imag_closed_form(const interface_jet& jet, const Xpt& x, const Freq& xi) {
    return Real(-0.5) * div_mixed_lam(make_eval(jet, x, xi));
}

symbol symbol_dtn(const spectral_field& psi, int sign) {
    if (sign != 1 && sign != -1) throw invalid_argument_error("symbol_dtn: sign must be +1 or -1");
    auto J = share_jet(psi);
    symbol a;
    a.order = 1;
    a.d = psi.d;
    a.x_independent = is_flat(psi);
    a.kind = "dtn";
    a.principal = [J](const Xpt& x, const Freq& xi) { return Complex(make_eval(*J, x, xi).lam); };
    a.subprincipal = [J, sign](const Xpt& x, const Freq& xi) {
        Complex lm = lambda0_minus(make_eval(*J, x, xi));
        return sign < 0 ? lm : -std::conj(lm);
    };
    a.dxi_principal = [J](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        return std::array<Complex, 2>{e.dxi_lam[0], e.dxi_lam[1]};
    };
    a.dx_principal = [J](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        return std::array<Complex, 2>{e.dx_lam[0], e.dx_lam[1]};
    };
    return a;
}

symbol symbol_lambda_summed(const spectral_field& psi) {
    auto J = share_jet(psi);
    symbol a;
    a.order = 1;
    a.d = psi.d;
    a.x_independent = is_flat(psi);
    a.kind = "dtn";
    a.principal = [J](const Xpt& x, const Freq& xi) {
        return Complex(2 * make_eval(*J, x, xi).lam);
    };
    a.subprincipal = [J](const Xpt& x, const Freq& xi) {
        return Complex(0, 2 * lambda0_minus(make_eval(*J, x, xi)).imag());
    };
    a.dxi_principal = [J](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        return std::array<Complex, 2>{2 * e.dxi_lam[0], 2 * e.dxi_lam[1]};
    };
    a.dx_principal = [J](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        return std::array<Complex, 2>{2 * e.dx_lam[0], 2 * e.dx_lam[1]};
    };
    return a;
}

symbol symbol_curvature(const spectral_field& psi) {
    auto J = share_jet(psi);
    symbol a;
    a.order = 2;
    a.d = psi.d;
    a.x_independent = is_flat(psi);
    a.kind = "curvature";
    a.principal = [J](const Xpt& x, const Freq& xi) {
        return Complex(h2_of(make_eval(*J, x, xi)));
    };
    a.subprincipal = [J](const Xpt& x, const Freq& xi) {
        return Complex(0, Real(-0.5) * div_mixed_h2(make_eval(*J, x, xi)));
    };
    a.dxi_principal = [J](const Xpt& x, const Freq& xi) {
        auto v = dxi_h2(make_eval(*J, x, xi));
        return std::array<Complex, 2>{v[0], v[1]};
    };
    a.dx_principal = [J](const Xpt& x, const Freq& xi) {
        auto v = dx_h2(make_eval(*J, x, xi));
        return std::array<Complex, 2>{v[0], v[1]};
    };
    return a;
}

symmetrizer_symbols symbol_symmetrizers(const spectral_field& psi, Real s) {
    if (s <= 1) throw invalid_argument_error("symbol_symmetrizers: need s > 1");
    auto J = share_jet(psi);
    bool flat = is_flat(psi);
    symmetrizer_symbols out;

    out.m.order = Real(1.5);
    out.m.d = psi.d;
    out.m.x_independent = flat;
    out.m.kind = "symmetrizer";
    out.m.principal = [J](const Xpt& x, const Freq& xi) {
        return Complex(m15_of(make_eval(*J, x, xi)));
    };
    out.m.subprincipal = [J](const Xpt& x, const Freq& xi) {
        return Complex(0, Real(-0.5) * div_mixed_m15(make_eval(*J, x, xi)));
    };
    out.m.dxi_principal = [J](const Xpt& x, const Freq& xi) {
        auto v = dxi_m15(make_eval(*J, x, xi));
        return std::array<Complex, 2>{v[0], v[1]};
    };
    out.m.dx_principal = [J](const Xpt& x, const Freq& xi) {
        auto v = dx_m15(make_eval(*J, x, xi));
        return std::array<Complex, 2>{v[0], v[1]};
    };

    out.n.order = 0;
    out.n.d = psi.d;
    out.n.x_independent = flat;
    out.n.kind = "symmetrizer";
    out.n.principal = [J](const Xpt& x, const Freq&) {
        auto P = J->grad(x);
        return Complex(n0_of(1 + P[0] * P[0] + P[1] * P[1]));
    };
    out.n.dxi_principal = [](const Xpt&, const Freq&) { return std::array<Complex, 2>{0, 0}; };
    out.n.dx_principal = [J](const Xpt& x, const Freq&) {
        auto P = J->grad(x);
        auto Q = J->hess(x);
        Real g = 1 + P[0] * P[0] + P[1] * P[1];
        Real w = Real(-0.5) * std::pow(Real(2), Real(-1) / 3) * std::pow(g, Real(-1.25));
        return std::array<Complex, 2>{w * (P[0] * Q[0] + P[1] * Q[1]),
                                      w * (P[0] * Q[1] + P[1] * Q[2])};
    };

    Real ex = (2 * s - 1) / 3;
    out.M.order = s - Real(0.5);
    out.M.d = psi.d;
    out.M.x_independent = flat;
    out.M.kind = "symmetrizer";
    out.M.principal = [J, ex](const Xpt& x, const Freq& xi) {
        return Complex(std::pow(m15_of(make_eval(*J, x, xi)), ex));
    };
    out.M.dxi_principal = [J, ex](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        Real w = ex * std::pow(m15_of(e), ex - 1);
        auto v = dxi_m15(e);
        return std::array<Complex, 2>{w * v[0], w * v[1]};
    };
    out.M.dx_principal = [J, ex](const Xpt& x, const Freq& xi) {
        auto e = make_eval(*J, x, xi);
        Real w = ex * std::pow(m15_of(e), ex - 1);
        auto v = dx_m15(e);
        return std::array<Complex, 2>{w * v[0], w * v[1]};
    };
    return out;
}

symbol symbol_compose(const symbol& a, const symbol& b, Real r) {
    if (a.d != b.d) throw grid_mismatch_error("symbol_compose: dimension mismatch");
    symbol out;
    out.order = a.order + b.order;
    out.d = a.d;
    out.x_independent = a.x_independent && b.x_independent;
    out.kind = "composite";
    symbol A = a, B = b;
    out.principal = [A, B](const Xpt& x, const Freq& xi) {
        return A.principal(x, xi) * B.principal(x, xi);
    };
    if (r >= 2) {
        bool cross = !B.x_independent;
        if (cross && (!A.dxi_principal || !B.dx_principal))
            throw invalid_argument_error("symbol_compose: missing derivative closed forms");
        out.subprincipal = [A, B, cross](const Xpt& x, const Freq& xi) {
            Complex s = A.eval_subprincipal(x, xi) * B.principal(x, xi) +
                        A.principal(x, xi) * B.eval_subprincipal(x, xi);
            if (cross) {
                auto da = A.dxi_principal(x, xi);
                auto db = B.dx_principal(x, xi);
                s += Complex(0, -1) * (da[0] * db[0] + da[1] * db[1]);
            }
            return s;
        };
    }
    if (a.dxi_principal && b.dxi_principal)
        out.dxi_principal = [A, B](const Xpt& x, const Freq& xi) {
            auto da = A.dxi_principal(x, xi);
            auto db = B.dxi_principal(x, xi);
            Complex pa = A.principal(x, xi), pb = B.principal(x, xi);
            return std::array<Complex, 2>{da[0] * pb + pa * db[0], da[1] * pb + pa * db[1]};
        };
    if (a.dx_principal && b.dx_principal)
        out.dx_principal = [A, B](const Xpt& x, const Freq& xi) {
            auto da = A.dx_principal(x, xi);
            auto db = B.dx_principal(x, xi);
            Complex pa = A.principal(x, xi), pb = B.principal(x, xi);
            return std::array<Complex, 2>{da[0] * pb + pa * db[0], da[1] * pb + pa * db[1]};
        };
    return out;
}

spectral_field para_apply(const symbol& a, const spectral_field& u, const pl_cutoffs& pl,
                          int jobs) {
    if (a.d != u.d) throw grid_mismatch_error("para_apply: symbol/field dimension mismatch");
    spectral_field out(u.d, u.n1, u.n2);

    if (a.x_independent) {
        const Xpt x0{0, 0};
        for (std::size_t s = 0; s < u.size(); ++s) {
            auto [k1, k2] = u.wavenumber(s);
            Real r = std::hypot(Real(k1), Real(k2));
            Real p = pl.phi(r);
            if (p == 0 || u.c[s] == Complex(0)) continue;
            out.c[s] = a.eval(x0, Freq{Real(k1), Real(k2)}) * p * u.c[s];
        }
        return out;
    }

    int nyq = nyquist_radius(u);
    Real bl = band_limit(u);
    if (bl * (1 + pl.eps2) > Real(nyq) + Real(0.5))
        throw invalid_argument_error("para_apply: input band too close to the grid cutoff");

    // Active input modes (phi > 0, nonzero coefficient).
    std::vector<std::size_t> active;
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto [k1, k2] = u.wavenumber(s);
        if (u.c[s] != Complex(0) && pl.phi(std::hypot(Real(k1), Real(k2))) > 0)
            active.push_back(s);
    }
    if (active.empty()) return out;

    int nw = std::max(1, std::min<int>(jobs, static_cast<int>(active.size())));
    std::size_t chunk = (active.size() + nw - 1) / nw;
    std::vector<spectral_field> acc(static_cast<std::size_t>(nw),
                                    spectral_field(u.d, u.n1, u.n2));
    const int n1 = u.n1, n2 = u.n2;

    parallel_for(active.size(), nw, [&](std::size_t lo, std::size_t hi) {
        spectral_field& mine = acc[lo / chunk];
        std::vector<Complex> prof(u.size()), prof_hat(u.size());
        std::vector<Real> xg1(n1), xg2(n2);
        for (int i = 0; i < n1; ++i) xg1[i] = 2 * pi * i / n1;
        for (int i = 0; i < n2; ++i) xg2[i] = 2 * pi * i / n2;
        for (std::size_t idx = lo; idx < hi; ++idx) {
            std::size_t s = active[idx];
            auto [e1, e2] = u.wavenumber(s);
            Freq eta{Real(e1), Real(e2)};
            Real enorm = std::hypot(eta[0], eta[1]);
            Complex weight = pl.phi(enorm) * u.c[s];
            for (int i1 = 0; i1 < n1; ++i1)
                for (int i2 = 0; i2 < n2; ++i2)
                    prof[static_cast<std::size_t>(i1) * n2 + i2] =
                        a.eval(Xpt{xg1[i1], xg2[i2]}, eta);
            fft::forward_c(prof.data(), prof_hat.data(), n1, n2);
            for (std::size_t t = 0; t < prof_hat.size(); ++t) {
                auto [t1, t2] = u.wavenumber(t);
                Real w = pl.chi(std::hypot(Real(t1), Real(t2)), enorm);
                if (w == 0 || prof_hat[t] == Complex(0)) continue;
                int o1 = t1 + e1, o2 = t2 + e2;
                if (2 * std::abs(o1) > n1 || 2 * std::abs(o2) > std::max(n2, 2)) continue;
                mine.at(o1, n2 == 1 ? 0 : o2) += w * prof_hat[t] * weight;
            }
        }
    });
    for (const auto& part : acc)
        for (std::size_t s = 0; s < out.size(); ++s) out.c[s] += part.c[s];
    return out;
}

spectral_field para_apply(const spectral_field& a, const spectral_field& u,
                          const pl_cutoffs& pl) {
    check_same_grid(a, u, "para_apply");
    Real bla = band_limit(a), blu = band_limit(u);
    int nyq = nyquist_radius(u);
    if (bla + blu > Real(nyq))
        throw invalid_argument_error("para_apply: product would alias past the grid cutoff");

    spectral_field out(u.d, u.n1, u.n2);
    if (blu == 0) return out;
    int kmax = 1 + static_cast<int>(std::ceil(std::log2(std::max(blu, Real(1)))));
    std::vector<Real> accum(u.size(), Real(0));
    for (int k = 3; k <= kmax + 1; ++k) {
        spectral_field uk = lp_project(u, k, pl);
        bool empty = true;
        for (const auto& z : uk.c)
            if (z != Complex(0)) {
                empty = false;
                break;
            }
        if (empty) continue;
        spectral_field alow(a.d, a.n1, a.n2);
        for (std::size_t s = 0; s < a.size(); ++s) {
            auto [k1, k2] = a.wavenumber(s);
            alow.c[s] = pl.low_pass(k - 3, std::hypot(Real(k1), Real(k2))) * a.c[s];
        }
        std::vector<Real> av = alow.values(), uv = uk.values();
        for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += av[i] * uv[i];
    }
    return spectral_field::from_values(accum, u.d, u.n1, u.n2);
}

bony_parts bony_decompose(const spectral_field& a, const spectral_field& u,
                          const pl_cutoffs& pl) {
    check_same_grid(a, u, "bony_decompose");
    Real bla = band_limit(a), blu = band_limit(u);
    if (bla + blu > Real(nyquist_radius(u)))
        throw invalid_argument_error("bony_decompose: product would alias past the grid cutoff");

    bony_parts out{para_apply(a, u, pl), para_apply(u, a, pl), spectral_field(u.d, u.n1, u.n2)};

    auto bands_of = [&](const spectral_field& f, Real bl) {
        int kmax = bl == 0 ? 0 : 1 + static_cast<int>(std::ceil(std::log2(std::max(bl, Real(1)))));
        std::vector<std::vector<Real>> v;
        for (int k = 0; k <= kmax + 1; ++k) v.push_back(lp_project(f, k, pl).values());
        return v;
    };
    auto ab = bands_of(a, bla), ub = bands_of(u, blu);
    std::vector<Real> accum(u.size(), Real(0));
    for (int k = 0; k < static_cast<int>(ab.size()); ++k)
        for (int l = std::max(0, k - 2); l < static_cast<int>(ub.size()) && l <= k + 2; ++l)
            for (std::size_t i = 0; i < accum.size(); ++i) accum[i] += ab[k][i] * ub[l][i];
    out.remainder = spectral_field::from_values(accum, u.d, u.n1, u.n2);
    return out;
}

spectral_field mean_curvature(const spectral_field& psi) {
    if (band_limit(psi) > Real(nyquist_radius(psi)) / 2)
        throw invalid_argument_error("mean_curvature: profile under-resolved on its grid");
    int N1 = 2 * psi.n1, N2 = psi.n2 > 1 ? 2 * psi.n2 : 1;
    spectral_field fine = pad_modes(psi, N1, N2);

    std::vector<Real> p1(fine.size()), p2(fine.size(), Real(0));
    {
        std::vector<Real> vals = fine.values();
        fft::derivative(vals.data(), p1.data(), N1, N2, 0);
        if (psi.d == 3) fft::derivative(vals.data(), p2.data(), N1, N2, 1);
    }
    std::vector<Real> w1(fine.size()), w2(fine.size());
    for (std::size_t i = 0; i < fine.size(); ++i) {
        Real g = std::sqrt(1 + p1[i] * p1[i] + p2[i] * p2[i]);
        w1[i] = p1[i] / g;
        w2[i] = p2[i] / g;
    }
    std::vector<Real> h(fine.size()), tmp(fine.size());
    fft::derivative(w1.data(), h.data(), N1, N2, 0);
    if (psi.d == 3) {
        fft::derivative(w2.data(), tmp.data(), N1, N2, 1);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] += tmp[i];
    }
    return truncate_modes(spectral_field::from_values(h, psi.d, N1, N2), psi.n1, psi.n2);
}

symmetrization_report symmetrization_residual(const spectral_field& psi, int nsamples,
                                              std::uint64_t seed, const pl_cutoffs& pl) {
    symmetrization_report rep;
    symbol h = symbol_curvature(psi);
    symbol Lam = symbol_lambda_summed(psi);
    auto sy = symbol_symmetrizers(psi, 4);
    symbol S1 = symbol_compose(sy.n, symbol_compose(Lam, h));
    symbol S2 = symbol_compose(symbol_compose(sy.m, sy.m), sy.n);

    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<Real> ux(0, 2 * pi), umag(1, 4), uang(0, 2 * pi);
    for (int i = 0; i < nsamples; ++i) {
        Xpt x{ux(eng), psi.d == 3 ? ux(eng) : 0};
        Real mag = umag(eng);
        Freq xi;
        if (psi.d == 3) {
            Real th = uang(eng);
            xi = {mag * std::cos(th), mag * std::sin(th)};
        } else {
            xi = {eng() % 2 ? mag : -mag, 0};
        }
        rep.order3_max =
            std::max(rep.order3_max, std::abs(S1.principal(x, xi) - S2.principal(x, xi)));
        rep.order2_max =
            std::max(rep.order2_max, std::abs(S1.eval_subprincipal(x, xi) -
                                              S2.eval_subprincipal(x, xi)));
    }

    // Operator-level comparison on u_k = cos(k x1). The fit frequencies must keep
    // the symbols' lowest x-harmonics inside the inner cone (|theta| <= eps1*k),
    // otherwise the quantization degenerates to a bare multiplier and the residual
    // sits at round-off instead of on its power law. With eps1 = 1/10 and harmonics
    // at |theta| = 2 that means k >= 20; we start at 40 so |theta| = 4 is in too.
    int n1 = std::max(psi.n1, psi.d == 2 ? 512 : 224);
    int n2 = psi.d == 2 ? 1 : std::max(psi.n2, 224);
    spectral_field psi_f = psi.n1 == n1 && psi.n2 == n2 ? psi : pad_modes(psi, n1, n2);
    symbol hf = symbol_curvature(psi_f);
    symbol Lf = symbol_lambda_summed(psi_f);
    auto syf = symbol_symmetrizers(psi_f, 4);
    std::vector<int> kfit = psi.d == 2 ? std::vector<int>{40, 80, 160}
                                       : std::vector<int>{24, 48, 96};
    for (int k : kfit) {
        spectral_field u(psi.d, n1, n2);
        u.at(k, 0) = Real(0.5);
        u.at(-k, 0) = Real(0.5);
        spectral_field lhs = para_apply(syf.n, para_apply(Lf, para_apply(hf, u, pl), pl), pl);
        spectral_field rhs =
            para_apply(syf.m, para_apply(syf.m, para_apply(syf.n, u, pl), pl), pl);
        spectral_field diff = lhs;
        for (std::size_t s = 0; s < diff.size(); ++s) diff.c[s] -= rhs.c[s];
        rep.freqs.push_back(k);
        rep.lhs_norm.push_back(lhs.l2_norm());
        rep.residual_norm.push_back(diff.l2_norm());
    }
    rep.lhs_slope = log_log_slope(rep.freqs, rep.lhs_norm);
    rep.residual_slope = log_log_slope(rep.freqs, rep.residual_norm);
    return rep;
}

}  // namespace cvsheet
