#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cvsheet {

using Real = double;
using Complex = std::complex<double>;

inline constexpr Real pi = 3.14159265358979323846264338327950288;

// Error taxonomy shared across modules.  Everything derives from
// cvsheet_error so callers can catch the whole family at once.
struct cvsheet_error : std::runtime_error {
    explicit cvsheet_error(const std::string& what) : std::runtime_error(what) {}
};

struct invalid_argument_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct degenerate_jacobian_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct collinear_fields_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct stability_violated_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct not_mean_zero_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct grid_mismatch_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct schema_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct solver_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};
struct insufficient_history_error : cvsheet_error {
    using cvsheet_error::cvsheet_error;
};

inline Real sqr(Real x) { return x * x; }

template <std::size_t N>
Real dot(const std::array<Real, N>& a, const std::array<Real, N>& b) {
    Real s = 0;
    for (std::size_t i = 0; i < N; ++i) s += a[i] * b[i];
    return s;
}

template <std::size_t N>
Real norm2(const std::array<Real, N>& a) {
    return std::sqrt(dot(a, a));
}

// z-component of the cross product of two in-plane vectors.
inline Real cross_z(const std::array<Real, 2>& a, const std::array<Real, 2>& b) {
    return a[0] * b[1] - a[1] * b[0];
}

// FNV-1a, used to fingerprint run configurations in report files.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Chunked parallel loop.  Results must not depend on the chunking: workers
// write to disjoint slots and any reduction happens serially afterwards.
inline void parallel_for(std::size_t n, int jobs,
                         const std::function<void(std::size_t, std::size_t)>& body) {
    if (jobs <= 1 || n < 2) {
        body(0, n);
        return;
    }
    std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::thread> pool;
    pool.reserve(nw);
    std::size_t chunk = (n + nw - 1) / nw;
    for (std::size_t w = 0; w < nw; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back(body, lo, hi);
    }
    for (auto& t : pool) t.join();
}

// Least-squares slope of y against x; used for order-of-convergence fits.
inline Real fit_slope(const std::vector<Real>& x, const std::vector<Real>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw invalid_argument_error("fit_slope: need at least two samples");
    Real mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<Real>(x.size());
    my /= static_cast<Real>(x.size());
    Real num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    if (den == 0) throw invalid_argument_error("fit_slope: degenerate abscissae");
    return num / den;
}

inline Real log_log_slope(const std::vector<Real>& h, const std::vector<Real>& err) {
    std::vector<Real> lx(h.size()), ly(err.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        lx[i] = std::log(h[i]);
        ly[i] = std::log(std::max(err[i], 1e-300));
    }
    return fit_slope(lx, ly);
}

}  // namespace cvsheet
