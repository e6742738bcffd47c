#pragma once

#include "cvsheet/common.hpp"

namespace cvsheet {

// Minimal dense row-major matrix; heavy linear algebra stays in the .cpp
// files, this is just for passing differentiation/resampling operators
// around.
struct dmat {
    int rows = 0, cols = 0;
    std::vector<Real> a;

    dmat() = default;
    dmat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    Real& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    Real operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    // y = A x applied to each column of a multi-vector stored with stride
    // `ncol` (x has rows*ncol entries laid out row-major by node).
    void apply_block(const Real* x, Real* y, int ncol) const;
    std::vector<Real> apply(const std::vector<Real>& x) const;
};

dmat matmul(const dmat& A, const dmat& B);

// n+1 Chebyshev-Lobatto points mapped so node 0 sits at `a` and node n at
// `b`; clustering near both ends.
std::vector<Real> lobatto_nodes(int n, Real a, Real b);

std::vector<Real> barycentric_weights(const std::vector<Real>& nodes);

// Spectral differentiation matrix on an arbitrary distinct node set
// (barycentric form with the negative-sum diagonal).
dmat diff_matrix(const std::vector<Real>& nodes);

// Clenshaw-Curtis quadrature weights for lobatto_nodes(n, a, b); exact for
// polynomials of degree n (n even: degree n+1), positive, sum to |b-a|.
std::vector<Real> clenshaw_curtis_weights(int n, Real a, Real b);

// Interpolation matrix taking values on src nodes to values on dst points.
dmat resample_matrix(const std::vector<Real>& src, const std::vector<Real>& dst);

}  // namespace cvsheet
