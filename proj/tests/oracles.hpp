// Test-only reference implementations, kept independent of the library code
// paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "blocklab/matrix.hpp"

namespace oracles {

// Classical two-sided Jacobi eigensolver for a symmetric matrix; returns
// eigenvalues sorted descending. Independent of the one-sided SVD routine.
inline std::vector<double> symmetric_eigenvalues(blocklab::Matrix a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("symmetric_eigenvalues: not square");
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

// Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(blocklab::Matrix a, std::vector<double> b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n) throw std::invalid_argument("solve_linear: bad shapes");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        }
        if (pivot != col) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a(col, k), a(pivot, k));
            std::swap(b[col], b[pivot]);
        }
        const double d = a(col, col);
        if (d == 0.0) throw std::runtime_error("solve_linear: singular system");
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / d;
            if (f == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) a(r, k) -= f * a(col, k);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t r = n; r-- > 0;) {
        double s = b[r];
        for (std::size_t k = r + 1; k < n; ++k) s -= a(r, k) * x[k];
        x[r] = s / a(r, r);
    }
    return x;
}

// Ordinary least squares W minimizing ||X W^T - Y||_F via normal equations;
// returns W (out x in).
inline blocklab::Matrix least_squares(const blocklab::Matrix& x, const blocklab::Matrix& y) {
    using blocklab::Matrix;
    const Matrix xtx = blocklab::matmul_tn(x, x);  // in x in
    const Matrix xty = blocklab::matmul_tn(x, y);  // in x out
    Matrix w(y.cols(), x.cols());
    for (std::size_t o = 0; o < y.cols(); ++o) {
        std::vector<double> rhs(x.cols());
        for (std::size_t i = 0; i < x.cols(); ++i) rhs[i] = xty(i, o);
        const auto sol = solve_linear(xtx, rhs);
        for (std::size_t i = 0; i < x.cols(); ++i) w(o, i) = sol[i];
    }
    return w;
}

// Central finite-difference gradient of f at x.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Adjusted Rand index between two labelings.
inline double adjusted_rand(const std::vector<std::uint32_t>& a,
                            const std::vector<std::uint32_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("adjusted_rand: size mismatch");
    const std::size_t n = a.size();
    const std::uint32_t ka = *std::max_element(a.begin(), a.end()) + 1;
    const std::uint32_t kb = *std::max_element(b.begin(), b.end()) + 1;
    std::vector<std::vector<std::uint64_t>> table(ka, std::vector<std::uint64_t>(kb, 0));
    for (std::size_t i = 0; i < n; ++i) ++table[a[i]][b[i]];
    const auto choose2 = [](std::uint64_t m) { return static_cast<double>(m) * (m - 1) / 2.0; };
    double sum_cells = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (std::uint32_t i = 0; i < ka; ++i) {
        std::uint64_t row = 0;
        for (std::uint32_t j = 0; j < kb; ++j) {
            sum_cells += choose2(table[i][j]);
            row += table[i][j];
        }
        sum_a += choose2(row);
    }
    for (std::uint32_t j = 0; j < kb; ++j) {
        std::uint64_t col = 0;
        for (std::uint32_t i = 0; i < ka; ++i) col += table[i][j];
        sum_b += choose2(col);
    }
    const double total = choose2(n);
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_cells - expected) / (max_index - expected);
}

// Transitive closure components by BFS over the thresholded graph.
inline std::vector<std::uint32_t> bfs_components(const blocklab::Matrix& nmi, double eps) {
    const std::size_t n = nmi.rows();
    std::vector<std::uint32_t> label(n, UINT32_MAX);
    std::uint32_t next = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] != UINT32_MAX) continue;
        std::vector<std::size_t> queue{s};
        label[s] = next;
        while (!queue.empty()) {
            const std::size_t u = queue.back();
            queue.pop_back();
            for (std::size_t v = 0; v < n; ++v) {
                if (v != u && label[v] == UINT32_MAX && nmi(u, v) >= eps) {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        ++next;
    }
    return label;
}

}  // namespace oracles
