#pragma once

#include "cvsheet/common.hpp"

namespace cvsheet::fft {

// Integer wavenumber of slot i on an n-point periodic grid (negative half in
// the upper slots, Nyquist kept positive).
inline int wavenumber(int i, int n) { return (i <= n / 2) ? i : i - n; }

// Horizontal transforms on the (2*pi)-periodic grid, layout i1*n2+i2.  The
// forward transform returns Fourier coefficients: f = sum_k fh[k] e^{i k.x}.
// `nplanes` consecutive planes are transformed in one call.
void forward(const Real* f, Complex* fh, int n1, int n2, int nplanes = 1);
void backward(const Complex* fh, Real* f, int n1, int n2, int nplanes = 1);
void forward_c(const Complex* f, Complex* fh, int n1, int n2, int nplanes = 1);
void backward_c(const Complex* fh, Complex* f, int n1, int n2, int nplanes = 1);

std::vector<Complex> forward(const std::vector<Real>& f, int n1, int n2);
std::vector<Real> backward(const std::vector<Complex>& fh, int n1, int n2);

// Spectral horizontal derivative d/dx_axis (axis 0 or 1) of real data;
// odd-order derivative at the Nyquist slot is set to zero.
void derivative(const Real* f, Real* df, int n1, int n2, int axis, int nplanes = 1);

}  // namespace cvsheet::fft
