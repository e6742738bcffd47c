#include "cvsheet/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace cvsheet::fft {

namespace {

struct plan_pair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    fftw_complex* buf = nullptr;
    int n = 0;
};

// One global lock: plan creation is not thread safe in FFTW, and we reuse a
// shared scratch buffer.  Transform sizes here are small enough that the
// serialization is irrelevant next to the surrounding linear algebra.
std::mutex mtx;
std::map<std::pair<int, int>, plan_pair> cache;

plan_pair& get_plans(int n1, int n2) {
    auto key = std::make_pair(n1, n2);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    plan_pair p;
    p.n = n1 * n2;
    p.buf = fftw_alloc_complex(static_cast<std::size_t>(p.n));
    if (n2 == 1) {
        p.fwd = fftw_plan_dft_1d(n1, p.buf, p.buf, FFTW_FORWARD, FFTW_ESTIMATE);
        p.bwd = fftw_plan_dft_1d(n1, p.buf, p.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    } else {
        p.fwd = fftw_plan_dft_2d(n1, n2, p.buf, p.buf, FFTW_FORWARD, FFTW_ESTIMATE);
        p.bwd = fftw_plan_dft_2d(n1, n2, p.buf, p.buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    return cache.emplace(key, p).first->second;
}

}  // namespace

void forward_c(const Complex* f, Complex* fh, int n1, int n2, int nplanes) {
    std::lock_guard<std::mutex> lock(mtx);
    auto& p = get_plans(n1, n2);
    const Real scale = 1.0 / p.n;
    for (int pl = 0; pl < nplanes; ++pl) {
        const Complex* src = f + static_cast<std::size_t>(pl) * p.n;
        Complex* dst = fh + static_cast<std::size_t>(pl) * p.n;
        for (int i = 0; i < p.n; ++i) {
            p.buf[i][0] = src[i].real();
            p.buf[i][1] = src[i].imag();
        }
        fftw_execute(p.fwd);
        for (int i = 0; i < p.n; ++i) dst[i] = Complex(p.buf[i][0], p.buf[i][1]) * scale;
    }
}

void backward_c(const Complex* fh, Complex* f, int n1, int n2, int nplanes) {
    std::lock_guard<std::mutex> lock(mtx);
    auto& p = get_plans(n1, n2);
    for (int pl = 0; pl < nplanes; ++pl) {
        const Complex* src = fh + static_cast<std::size_t>(pl) * p.n;
        Complex* dst = f + static_cast<std::size_t>(pl) * p.n;
        for (int i = 0; i < p.n; ++i) {
            p.buf[i][0] = src[i].real();
            p.buf[i][1] = src[i].imag();
        }
        fftw_execute(p.bwd);
        for (int i = 0; i < p.n; ++i) dst[i] = Complex(p.buf[i][0], p.buf[i][1]);
    }
}

void forward(const Real* f, Complex* fh, int n1, int n2, int nplanes) {
    const int n = n1 * n2;
    std::vector<Complex> tmp(static_cast<std::size_t>(n) * nplanes);
    for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = Complex(f[i], 0.0);
    forward_c(tmp.data(), fh, n1, n2, nplanes);
}

void backward(const Complex* fh, Real* f, int n1, int n2, int nplanes) {
    const int n = n1 * n2;
    std::vector<Complex> tmp(static_cast<std::size_t>(n) * nplanes);
    backward_c(fh, tmp.data(), n1, n2, nplanes);
    for (std::size_t i = 0; i < tmp.size(); ++i) f[i] = tmp[i].real();
}

std::vector<Complex> forward(const std::vector<Real>& f, int n1, int n2) {
    std::vector<Complex> fh(f.size());
    forward(f.data(), fh.data(), n1, n2, static_cast<int>(f.size()) / (n1 * n2));
    return fh;
}

std::vector<Real> backward(const std::vector<Complex>& fh, int n1, int n2) {
    std::vector<Real> f(fh.size());
    backward(fh.data(), f.data(), n1, n2, static_cast<int>(fh.size()) / (n1 * n2));
    return f;
}

void derivative(const Real* f, Real* df, int n1, int n2, int axis, int nplanes) {
    const int n = n1 * n2;
    std::vector<Complex> fh(static_cast<std::size_t>(n) * nplanes);
    forward(f, fh.data(), n1, n2, nplanes);
    for (int pl = 0; pl < nplanes; ++pl) {
        Complex* s = fh.data() + static_cast<std::size_t>(pl) * n;
        for (int i1 = 0; i1 < n1; ++i1) {
            for (int i2 = 0; i2 < n2; ++i2) {
                int k = (axis == 0) ? wavenumber(i1, n1) : wavenumber(i2, n2);
                int nn = (axis == 0) ? n1 : n2;
                if (nn % 2 == 0 && ((axis == 0 && i1 == n1 / 2) || (axis == 1 && i2 == n2 / 2)))
                    k = 0;
                s[i1 * n2 + i2] *= Complex(0.0, static_cast<Real>(k));
            }
        }
    }
    backward(fh.data(), df, n1, n2, nplanes);
}

}  // namespace cvsheet::fft
