#include <doctest.h>

#include "cvsheet/paradiff.hpp"

#include <cmath>
#include <random>

using namespace cvsheet;

namespace {

spectral_field single_sine(int n1, Real amp, int k) {
    spectral_field psi(2, n1, 1);
    psi.at(k, 0) = Complex(0, -amp / 2);  // amp * sin(k x1)
    psi.at(-k, 0) = Complex(0, amp / 2);
    return psi;
}

spectral_field random_band_limited(int d, int n1, int n2, int kmax, std::mt19937_64& eng) {
    std::uniform_real_distribution<Real> uni(-1.0, 1.0);
    std::vector<Real> vals(static_cast<std::size_t>(n1) * n2, 0.0);
    spectral_field u(d, n1, n2);
    for (int k1 = -kmax; k1 <= kmax; ++k1)
        for (int k2 = d == 3 ? -kmax : 0; k2 <= (d == 3 ? kmax : 0); ++k2) {
            if (k1 * k1 + k2 * k2 > kmax * kmax) continue;
            u.at(k1, k2) += Complex(uni(eng), uni(eng));
        }
    // symmetrize so the field is real
    spectral_field h(d, n1, n2);
    for (std::size_t s = 0; s < u.size(); ++s) {
        auto [k1, k2] = u.wavenumber(s);
        h.c[s] = Real(0.5) * (u.c[s] + std::conj(u.at(-k1, -k2)));
    }
    return h;
}

symbol multiplier_abs_xi() {
    symbol a;
    a.order = 1;
    a.d = 2;
    a.x_independent = true;
    a.kind = "test";
    a.principal = [](const Xpt&, const Freq& xi) {
        return Complex(std::hypot(xi[0], xi[1]));
    };
    a.dxi_principal = [](const Xpt&, const Freq& xi) {
        Real r = std::hypot(xi[0], xi[1]);
        return std::array<Complex, 2>{xi[0] / r, xi[1] / r};
    };
    a.dx_principal = [](const Xpt&, const Freq&) { return std::array<Complex, 2>{0, 0}; };
    return a;
}

Real max_coeff_diff(const spectral_field& a, const spectral_field& b) {
    Real m = 0;
    for (std::size_t s = 0; s < a.size(); ++s) m = std::max(m, std::abs(a.c[s] - b.c[s]));
    return m;
}

}  // namespace

TEST_SUITE("paradiff") {

TEST_CASE("dyadic windows partition band-limited fields") {
    pl_cutoffs pl;
    spectral_field u(2, 64, 1);
    u.at(0, 0) = 2.5;
    spectral_field p0 = lp_project(u, 0, pl);
    CHECK(std::abs(p0.at(0, 0) - Complex(2.5)) < 1e-15);
    for (int k = 1; k <= 6; ++k) CHECK(lp_project(u, k, pl).l2_norm() == 0.0);
    CHECK(lp_project(u, -1, pl).l2_norm() == 0.0);

    // e^{i 3 x1} lives in exactly the two adjacent bands covering r = 3
    spectral_field e3(2, 64, 1);
    e3.at(3, 0) = 1.0;
    int nonzero = 0;
    Real total = 0;
    for (int k = 0; k <= 7; ++k) {
        Real w = std::abs(lp_project(e3, k, pl).at(3, 0));
        if (w > 1e-15) ++nonzero;
        total += w;
    }
    CHECK(nonzero == 2);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));

    std::mt19937_64 eng(5);
    spectral_field r = random_band_limited(2, 64, 1, 20, eng);
    spectral_field sum(2, 64, 1);
    for (int k = 0; k <= 6; ++k) {
        spectral_field pk = lp_project(r, k, pl);
        for (std::size_t s = 0; s < sum.size(); ++s) sum.c[s] += pk.c[s];
    }
    CHECK(max_coeff_diff(sum, r) < 1e-14);
}

TEST_CASE("x-independent symbols act as Fourier multipliers") {
    pl_cutoffs pl;
    symbol a = multiplier_abs_xi();
    spectral_field u(2, 64, 1);
    u.at(5, 0) = 0.5;
    u.at(-5, 0) = 0.5;  // cos(5 x1)
    spectral_field v = para_apply(a, u, pl);
    CHECK(std::abs(v.at(5, 0) - Complex(2.5)) < 1e-13);   // 5 * phi(5) * 1/2
    CHECK(std::abs(v.at(-5, 0) - Complex(2.5)) < 1e-13);
    CHECK(pl.phi(5.0) == 1.0);

    symbol one;
    one.order = 0;
    one.d = 2;
    one.x_independent = true;
    one.principal = [](const Xpt&, const Freq&) { return Complex(1); };
    spectral_field w(2, 64, 1);
    w.at(0, 0) = 3.0;
    w.at(1, 0) = 0.5;
    w.at(-1, 0) = 0.5;
    w.at(7, 0) = Complex(0, -0.5);
    w.at(-7, 0) = Complex(0, 0.5);
    spectral_field vw = para_apply(one, w, pl);
    CHECK(std::abs(vw.at(0, 0)) == 0.0);  // phi kills |eta| <= 1
    CHECK(std::abs(vw.at(1, 0)) == 0.0);
    CHECK(std::abs(vw.at(7, 0) - Complex(0, -0.5)) < 1e-15);
}

TEST_CASE("bony decomposition reconstructs the pointwise product") {
    pl_cutoffs pl;
    std::mt19937_64 eng(17);

    // constant a: the three parts sum to c * u
    spectral_field cu = random_band_limited(2, 64, 1, 10, eng);
    spectral_field ca(2, 64, 1);
    ca.at(0, 0) = 1.7;
    bony_parts bc = bony_decompose(ca, cu, pl);
    std::vector<Real> uv = cu.values();
    spectral_field total = bc.Ta_u;
    for (std::size_t s = 0; s < total.size(); ++s)
        total.c[s] += bc.Tu_a.c[s] + bc.remainder.c[s];
    std::vector<Real> tv = total.values();
    Real worst = 0;
    for (std::size_t i = 0; i < tv.size(); ++i)
        worst = std::max(worst, std::abs(tv[i] - 1.7 * uv[i]));
    CHECK(worst < 1e-12);

    // two single oscillations in 3D: product is one oblique mode
    spectral_field a3(3, 16, 16), u3(3, 16, 16);
    a3.at(1, 0) = 0.5;
    a3.at(-1, 0) = 0.5;
    u3.at(0, 1) = 0.5;
    u3.at(0, -1) = 0.5;
    bony_parts b3 = bony_decompose(a3, u3, pl);
    spectral_field t3 = b3.Ta_u;
    for (std::size_t s = 0; s < t3.size(); ++s) t3.c[s] += b3.Tu_a.c[s] + b3.remainder.c[s];
    // cos(x1) cos(x2) = (cos(x1+x2) + cos(x1-x2)) / 2
    CHECK(std::abs(t3.at(1, 1) - Complex(0.25)) < 1e-14);
    CHECK(std::abs(t3.at(1, -1) - Complex(0.25)) < 1e-14);
    CHECK(std::abs(t3.at(1, 0)) < 1e-14);

    // random pair
    spectral_field ra = random_band_limited(2, 128, 1, 25, eng);
    spectral_field ru = random_band_limited(2, 128, 1, 30, eng);
    bony_parts br = bony_decompose(ra, ru, pl);
    std::vector<Real> av = ra.values(), rv = ru.values();
    spectral_field tr = br.Ta_u;
    for (std::size_t s = 0; s < tr.size(); ++s) tr.c[s] += br.Tu_a.c[s] + br.remainder.c[s];
    std::vector<Real> trv = tr.values();
    worst = 0;
    for (std::size_t i = 0; i < trv.size(); ++i)
        worst = std::max(worst, std::abs(trv[i] - av[i] * rv[i]));
    CHECK(worst < 1e-12);
}

TEST_CASE("paraproduct is bounded by the sup norm of the low factor") {
    pl_cutoffs pl;
    std::mt19937_64 eng(23);
    Real worst_ratio = 0;
    for (int trial = 0; trial < 20; ++trial) {
        spectral_field a = random_band_limited(2, 128, 1, 20, eng);
        spectral_field u = random_band_limited(2, 128, 1, 40, eng);
        spectral_field v = para_apply(a, u, pl);
        Real ratio = v.sobolev_norm(2) / (a.max_abs() * u.sobolev_norm(2));
        worst_ratio = std::max(worst_ratio, ratio);
    }
    CHECK(worst_ratio < 3.0);
    CHECK(worst_ratio > 0.0);
}

TEST_CASE("dtn symbol: flat interface and the tilted closed form") {
    spectral_field zero(2, 32, 1);
    symbol flat = symbol_dtn(zero, -1);
    CHECK(flat.x_independent);
    CHECK(flat.order == doctest::Approx(1.0));
    for (Real k : {1.5, 2.0, 7.0}) {
        CHECK(std::abs(flat.principal({0.3, 0}, {k, 0}) - Complex(k)) < 1e-14);
        CHECK(std::abs(flat.eval_subprincipal({0.3, 0}, {k, 0})) < 1e-14);
    }

    // psi = 0.1 sin(x1): at xi = (1,0) the principal is identically 1
    spectral_field psi = single_sine(64, 0.1, 1);
    symbol lower = symbol_dtn(psi, -1);
    symbol upper = symbol_dtn(psi, +1);
    interface_jet jet(psi);
    for (int i = 0; i < 20; ++i) {
        Xpt x{2 * pi * i / 20.0, 0};
        CHECK(std::abs(lower.principal(x, {1, 0}) - Complex(1)) < 1e-14);
        Complex lm = lower.eval_subprincipal(x, {3, 0});
        Complex lp = upper.eval_subprincipal(x, {3, 0});
        CHECK(std::abs(lm + std::conj(lp)) < 1e-15);
        // self-adjoint normalization of the sub-principal part
        CHECK(lm.imag() ==
              doctest::Approx(dtn_subprincipal_imag_closed_form(jet, x, {3, 0})).epsilon(1e-12));
    }

    // degree-1 homogeneity at random samples
    std::mt19937_64 eng(31);
    std::uniform_real_distribution<Real> ux(0, 2 * pi), uk(1.0, 4.0);
    for (int i = 0; i < 50; ++i) {
        Xpt x{ux(eng), 0};
        Freq xi{(eng() % 2 ? 1 : -1) * uk(eng), 0};
        Freq xi2{2 * xi[0], 0};
        Complex l1 = lower.principal(x, xi), l2 = lower.principal(x, xi2);
        CHECK(std::abs(l2 - Real(2) * l1) < 1e-12 * std::abs(l2));
    }
}

TEST_CASE("curvature symbol: flat limit and the factorization") {
    spectral_field zero(2, 32, 1);
    symbol hf = symbol_curvature(zero);
    CHECK(std::abs(hf.principal({0, 0}, {3, 0}) - Complex(9)) < 1e-13);
    CHECK(std::abs(hf.eval_subprincipal({0, 0}, {3, 0})) < 1e-15);

    spectral_field psi = single_sine(64, 0.2, 1);
    symbol h = symbol_curvature(psi);
    interface_jet jet(psi);
    std::mt19937_64 eng(41);
    std::uniform_real_distribution<Real> ux(0, 2 * pi), uk(0.5, 2.0);
    Real worst = 0;
    for (int i = 0; i < 1000; ++i) {
        Xpt x{ux(eng), 0};
        Freq xi{(eng() % 2 ? 1 : -1) * uk(eng), 0};
        auto P = jet.grad(x);
        Real g = 1 + P[0] * P[0] + P[1] * P[1];
        Real c = Real(0.5) * std::pow(g, Real(-0.75));
        Real lam = std::hypot(xi[0], xi[1]) *
                   std::sqrt(g - P[0] * P[0]);  // xi = (xi1, 0): lambda^2 = (1+P2^2) xi1^2
        Real big_lambda = 2 * lam;
        worst = std::max(worst,
                         std::abs(h.principal(x, xi).real() - sqr(c * big_lambda)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("mean curvature: linearization slope and closed form") {
    spectral_field zero(2, 64, 1);
    CHECK(mean_curvature(zero).l2_norm() == 0.0);

    // H(psi) for psi = A sin(x1) equals psi'' / (1 + psi'^2)^{3/2}
    Real A = 0.3;
    spectral_field psi = single_sine(64, A, 1);
    spectral_field H = mean_curvature(psi);
    std::vector<Real> hv = H.values();
    Real worst = 0;
    for (int i = 0; i < 64; ++i) {
        Real x = 2 * pi * i / 64.0;
        Real exact = -A * std::sin(x) / std::pow(1 + sqr(A * std::cos(x)), Real(1.5));
        worst = std::max(worst, std::abs(hv[static_cast<std::size_t>(i)] - exact));
    }
    CHECK(worst < 1e-10);

    // H(eps sin) = -eps sin + O(eps^3)
    std::vector<Real> eps{0.1, 0.05, 0.025}, defect;
    for (Real e : eps) {
        spectral_field p = single_sine(64, e, 1);
        spectral_field he = mean_curvature(p);
        std::vector<Real> v = he.values();
        Real w = 0;
        for (int i = 0; i < 64; ++i) {
            Real x = 2 * pi * i / 64.0;
            w = std::max(w, std::abs(v[static_cast<std::size_t>(i)] + e * std::sin(x)));
        }
        defect.push_back(w);
    }
    Real slope = log_log_slope(eps, defect);
    CHECK(slope == doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("symmetrizer symbols: flat values, Re m05 = 0, closed-form M") {
    spectral_field zero(2, 32, 1);
    auto flat = symbol_symmetrizers(zero, 4.0);
    CHECK(std::abs(flat.n.principal({0, 0}, {5, 0}) -
                   Complex(std::pow(2.0, -1.0 / 3))) < 1e-15);
    CHECK(std::abs(flat.m.principal({0, 0}, {2, 0}) - Complex(4.0)) < 1e-13);
    CHECK(std::abs(flat.m.eval_subprincipal({0, 0}, {2, 0})) < 1e-15);

    spectral_field psi = single_sine(96, 0.2, 1);
    auto sy = symbol_symmetrizers(psi, 4.0);
    interface_jet jet(psi);
    std::mt19937_64 eng(59);
    std::uniform_real_distribution<Real> ux(0, 2 * pi), uk(1.0, 4.0);
    for (int i = 0; i < 200; ++i) {
        Xpt x{ux(eng), 0};
        Freq xi{(eng() % 2 ? 1 : -1) * uk(eng), 0};
        CHECK(sy.m.eval_subprincipal(x, xi).real() == 0.0);

        // closed form of M at s = 4 through the normal direction
        auto P = jet.grad(x);
        Real g = 1 + P[0] * P[0] + P[1] * P[1];
        Real xi2 = xi[0] * xi[0];
        Real t = sqr(P[0] * xi[0]) / (g * xi2);
        Real closed = std::pow(2.0, 7.0 / 6) * std::pow(std::abs(xi[0]), 3.5) *
                      std::pow(1 - t, 1.75);
        CHECK(sy.M.principal(x, xi).real() == doctest::Approx(closed).epsilon(1e-12));

        // homogeneity of degree s - 1/2
        Complex M1 = sy.M.principal(x, xi);
        Complex M3 = sy.M.principal(x, {3 * xi[0], 0});
        CHECK(std::abs(M3 - std::pow(3.0, 3.5) * M1) < 1e-11 * std::abs(M3));
    }

    CHECK_THROWS_AS(symbol_symmetrizers(psi, 0.5), invalid_argument_error);
}

TEST_CASE("composition: x-independent product and operator-level order gain") {
    spectral_field zero(2, 32, 1);
    symbol a = multiplier_abs_xi();
    symbol b = symbol_curvature(zero);
    symbol ab = symbol_compose(a, b);
    CHECK(ab.order == doctest::Approx(3.0));
    CHECK(std::abs(ab.eval({0.2, 0}, {4, 0}) - Complex(64.0)) < 1e-12);  // |xi|^3

    // x-dependent order-0 times |xi|: no cross term survives
    spectral_field psi = single_sine(64, 0.2, 1);
    auto sy = symbol_symmetrizers(psi, 4.0);
    symbol nb = symbol_compose(sy.n, multiplier_abs_xi());
    Xpt x{1.1, 0};
    CHECK(std::abs(nb.eval(x, {5, 0}) - sy.n.principal(x, {5, 0}) * Real(5)) < 1e-13);

    // T_a T_b u vs T_{a#b} u: the two-term truncation gains two orders. Fit
    // frequencies sit where the symbols' x-harmonics (|theta| = 2, 4 for a
    // single-sine psi) are inside the inner cone; below k = 20 the cone strips
    // them all and both sides collapse to the same multiplier.
    pl_cutoffs pl;
    spectral_field psif = pad_modes(psi, 512, 1);
    symbol h = symbol_curvature(psif);
    symbol L = symbol_lambda_summed(psif);
    symbol Lh = symbol_compose(L, h);
    std::vector<Real> ks, lhs, resid;
    for (int k : {40, 80, 160}) {
        spectral_field u(2, 512, 1);
        u.at(k, 0) = 0.5;
        u.at(-k, 0) = 0.5;
        spectral_field two_step = para_apply(L, para_apply(h, u, pl), pl);
        spectral_field one_step = para_apply(Lh, u, pl);
        spectral_field diff = two_step;
        for (std::size_t s = 0; s < diff.size(); ++s) diff.c[s] -= one_step.c[s];
        ks.push_back(k);
        lhs.push_back(two_step.l2_norm());
        resid.push_back(diff.l2_norm());
    }
    Real slope_lhs = log_log_slope(ks, lhs);
    Real slope_res = log_log_slope(ks, resid);
    CHECK(slope_lhs == doctest::Approx(3.0).epsilon(0.1));
    CHECK(slope_res == doctest::Approx(1.0).epsilon(0.3));
    CHECK(slope_lhs - slope_res >= 1.7);  // remainder order m + m' - 2
}

TEST_CASE("symmetrization residual vanishes at orders 3 and 2") {
    spectral_field zero(2, 64, 1);
    symmetrization_report flat = symmetrization_residual(zero, 100, 3);
    CHECK(flat.order3_max < 1e-12);
    CHECK(flat.order2_max < 1e-12);

    spectral_field psi = single_sine(128, 0.2, 1);
    symmetrization_report rep = symmetrization_residual(psi, 1000, 7);
    CHECK(rep.order3_max < 1e-10);
    CHECK(rep.order2_max < 1e-10);
    CHECK(rep.lhs_slope == doctest::Approx(3.0).epsilon(0.1));
    // analytic psi gives the full two-term composition gain (about 2)
    CHECK(rep.measured_gain() >= 1.5);
}

TEST_CASE("paradifferential application maps real fields to real fields") {
    pl_cutoffs pl;
    std::mt19937_64 eng(71);
    spectral_field psi = single_sine(64, 0.2, 1);
    spectral_field u = random_band_limited(2, 64, 1, 8, eng);
    std::vector<symbol> zoo;
    zoo.push_back(symbol_dtn(psi, -1));
    zoo.push_back(symbol_dtn(psi, +1));
    zoo.push_back(symbol_lambda_summed(psi));
    zoo.push_back(symbol_curvature(psi));
    auto sy = symbol_symmetrizers(psi, 4.0);
    zoo.push_back(sy.m);
    zoo.push_back(sy.n);
    zoo.push_back(sy.M);
    zoo.push_back(symbol_compose(symbol_lambda_summed(psi), symbol_curvature(psi)));
    for (const auto& a : zoo) {
        spectral_field v = para_apply(a, u, pl);
        Real norm = v.l2_norm();
        REQUIRE(norm > 0);
        CHECK(v.hermitian_defect() < 1e-12 * norm);
    }
}

TEST_CASE("aliasing guards reject under-resolved inputs") {
    pl_cutoffs pl;
    spectral_field psi = single_sine(64, 0.2, 1);
    symbol h = symbol_curvature(psi);
    spectral_field u(2, 64, 1);
    u.at(31, 0) = 0.5;
    u.at(-31, 0) = 0.5;
    CHECK_THROWS_AS(para_apply(h, u, pl), invalid_argument_error);

    std::mt19937_64 eng(83);
    spectral_field a = random_band_limited(2, 64, 1, 20, eng);
    spectral_field b = random_band_limited(2, 64, 1, 20, eng);
    CHECK_THROWS_AS(bony_decompose(a, b, pl), invalid_argument_error);

    spectral_field rough(2, 32, 1);
    rough.at(15, 0) = Complex(0, -0.1);
    rough.at(-15, 0) = Complex(0, 0.1);
    CHECK_THROWS_AS(mean_curvature(rough), invalid_argument_error);
}

TEST_CASE("curvature paralinearization gains at least one order") {
    // family psi_k = a0 k^{-2} cos(k x1): T_h psi_k stays O(1) while the
    // remainder H(psi) + T_h psi decays
    pl_cutoffs pl;
    std::vector<Real> ks, tnorm, rnorm;
    for (int k : {8, 16, 32}) {
        int n1 = 256;
        spectral_field psi(2, n1, 1);
        Real a0 = 0.4;
        psi.at(k, 0) = a0 / (2.0 * k * k);
        psi.at(-k, 0) = a0 / (2.0 * k * k);
        symbol h = symbol_curvature(psi);
        spectral_field Th = para_apply(h, psi, pl);
        spectral_field Hc = mean_curvature(psi);
        spectral_field r = Hc;
        for (std::size_t s = 0; s < r.size(); ++s) r.c[s] += Th.c[s];
        ks.push_back(k);
        tnorm.push_back(Th.l2_norm());
        rnorm.push_back(r.l2_norm());
    }
    Real slope_t = log_log_slope(ks, tnorm);
    Real slope_r = log_log_slope(ks, rnorm);
    CHECK(slope_t - slope_r >= 1.0);
}

}  // TEST_SUITE
