#include "cvsheet/chebyshev.hpp"

#include <Eigen/Dense>

namespace cvsheet {

void dmat::apply_block(const Real* x, Real* y, int ncol) const {
    using emat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const emat> A(a.data(), rows, cols);
    Eigen::Map<const emat> X(x, cols, ncol);
    Eigen::Map<emat> Y(y, rows, ncol);
    Y.noalias() = A * X;
}

std::vector<Real> dmat::apply(const std::vector<Real>& x) const {
    if (static_cast<int>(x.size()) != cols)
        throw grid_mismatch_error("dmat::apply: size mismatch");
    std::vector<Real> y(static_cast<std::size_t>(rows));
    apply_block(x.data(), y.data(), 1);
    return y;
}

dmat matmul(const dmat& A, const dmat& B) {
    if (A.cols != B.rows) throw grid_mismatch_error("matmul: shape mismatch");
    dmat C(A.rows, B.cols);
    using emat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const emat> a(A.a.data(), A.rows, A.cols);
    Eigen::Map<const emat> b(B.a.data(), B.rows, B.cols);
    Eigen::Map<emat> c(C.a.data(), C.rows, C.cols);
    c.noalias() = a * b;
    return C;
}

std::vector<Real> lobatto_nodes(int n, Real a, Real b) {
    if (n < 1) throw invalid_argument_error("lobatto_nodes: need n >= 1");
    std::vector<Real> x(static_cast<std::size_t>(n) + 1);
    for (int j = 0; j <= n; ++j)
        x[j] = a + (b - a) * 0.5 * (1.0 - std::cos(pi * j / n));
    x[0] = a;
    x[n] = b;
    return x;
}

std::vector<Real> barycentric_weights(const std::vector<Real>& nodes) {
    const int m = static_cast<int>(nodes.size());
    std::vector<Real> w(nodes.size(), 1.0);
    // Rescale products on the fly to dodge overflow for large m.
    for (int j = 0; j < m; ++j) {
        Real p = 1.0;
        for (int k = 0; k < m; ++k) {
            if (k == j) continue;
            p *= (nodes[j] - nodes[k]) * 2.0 / std::abs(nodes[m - 1] - nodes[0]);
        }
        w[j] = 1.0 / p;
    }
    return w;
}

dmat diff_matrix(const std::vector<Real>& nodes) {
    const int m = static_cast<int>(nodes.size());
    auto w = barycentric_weights(nodes);
    dmat D(m, m);
    for (int i = 0; i < m; ++i) {
        Real diag = 0;
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            D(i, j) = (w[j] / w[i]) / (nodes[i] - nodes[j]);
            diag -= D(i, j);
        }
        D(i, i) = diag;
    }
    return D;
}

std::vector<Real> clenshaw_curtis_weights(int n, Real a, Real b) {
    if (n < 1) throw invalid_argument_error("clenshaw_curtis_weights: need n >= 1");
    std::vector<Real> w(static_cast<std::size_t>(n) + 1, 0.0);
    if (n == 1) {
        w[0] = w[1] = 1.0;
    } else {
        std::vector<Real> theta(static_cast<std::size_t>(n) + 1);
        for (int j = 0; j <= n; ++j) theta[j] = pi * j / n;
        std::vector<Real> v(static_cast<std::size_t>(n) - 1, 1.0);
        if (n % 2 == 0) {
            w[0] = w[n] = 1.0 / (static_cast<Real>(n) * n - 1.0);
            for (int k = 1; k <= n / 2 - 1; ++k)
                for (int i = 1; i < n; ++i)
                    v[i - 1] -= 2.0 * std::cos(2.0 * k * theta[i]) / (4.0 * k * k - 1.0);
            for (int i = 1; i < n; ++i)
                v[i - 1] -= std::cos(static_cast<Real>(n) * theta[i]) /
                            (static_cast<Real>(n) * n - 1.0);
        } else {
            w[0] = w[n] = 1.0 / (static_cast<Real>(n) * n);
            for (int k = 1; k <= (n - 1) / 2; ++k)
                for (int i = 1; i < n; ++i)
                    v[i - 1] -= 2.0 * std::cos(2.0 * k * theta[i]) / (4.0 * k * k - 1.0);
        }
        for (int i = 1; i < n; ++i) w[i] = 2.0 * v[i - 1] / n;
    }
    const Real scale = std::abs(b - a) * 0.5;
    for (auto& wi : w) wi *= scale;
    return w;
}

dmat resample_matrix(const std::vector<Real>& src, const std::vector<Real>& dst) {
    const int m = static_cast<int>(src.size());
    const int p = static_cast<int>(dst.size());
    auto w = barycentric_weights(src);
    dmat P(p, m);
    for (int i = 0; i < p; ++i) {
        int hit = -1;
        for (int j = 0; j < m; ++j) {
            if (dst[i] == src[j]) {
                hit = j;
                break;
            }
        }
        if (hit >= 0) {
            P(i, hit) = 1.0;
            continue;
        }
        Real denom = 0;
        for (int j = 0; j < m; ++j) denom += w[j] / (dst[i] - src[j]);
        for (int j = 0; j < m; ++j) P(i, j) = (w[j] / (dst[i] - src[j])) / denom;
    }
    return P;
}

}  // namespace cvsheet
