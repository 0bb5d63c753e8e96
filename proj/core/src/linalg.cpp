#include "blocklab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace blocklab {

std::vector<double> svd_values(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw std::invalid_argument("svd_values: empty matrix");
    }
    if (!m.all_finite()) {
        throw std::invalid_argument("svd_values: non-finite entry");
    }
    // Work on the orientation with rows >= cols so the Jacobi sweep
    // orthogonalizes the smaller column set.
    Matrix a = m.rows() >= m.cols() ? m : m.transposed();
    const std::size_t n = a.rows(), k = a.cols();

    // Column-major copy for contiguous column access.
    std::vector<std::vector<double>> col(k, std::vector<double>(n));
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < n; ++i) col[j][i] = a(i, j);

    const double eps = 1e-15;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < k; ++p) {
            for (std::size_t q = p + 1; q < k; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                const double* cp = col[p].data();
                const double* cq = col[q].data();
                for (std::size_t i = 0; i < n; ++i) {
                    app += cp[i] * cp[i];
                    aqq += cq[i] * cq[i];
                    apq += cp[i] * cq[i];
                }
                if (std::abs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                double* mp = col[p].data();
                double* mq = col[q].data();
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = mp[i], vq = mq[i];
                    mp[i] = c * vp - s * vq;
                    mq[i] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(k);
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (double v : col[j]) s += v * v;
        sigma[j] = std::sqrt(s);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<>());
    return sigma;
}

double operator_norm(const Matrix& m) {
    return svd_values(m).front();
}

Matrix matrix_exp(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("matrix_exp: matrix must be square");
    }
    if (!m.all_finite()) {
        throw std::invalid_argument("matrix_exp: non-finite entry");
    }
    const std::size_t n = m.rows();
    if (n == 0) return Matrix();

    // 1-norm (max column sum) drives the scaling.
    double norm1 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::abs(m(i, j));
        norm1 = std::max(norm1, s);
    }
    int scale = 0;
    while (norm1 > 0.5 && scale < 64) {
        norm1 *= 0.5;
        ++scale;
    }

    Matrix x = m * std::ldexp(1.0, -scale);
    Matrix result = Matrix::identity(n);
    Matrix term = Matrix::identity(n);
    for (int j = 1; j <= 20; ++j) {
        term = matmul(term, x);
        term *= 1.0 / static_cast<double>(j);
        result += term;
    }
    for (int i = 0; i < scale; ++i) result = matmul(result, result);
    return result;
}

QrResult householder_qr(const Matrix& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("householder_qr: empty matrix");
    }
    const std::size_t k = std::min(rows, cols);
    Matrix r = m;
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(k);

    for (std::size_t col = 0; col < k; ++col) {
        double norm = 0.0;
        for (std::size_t i = col; i < rows; ++i) norm += r(i, col) * r(i, col);
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            reflectors.emplace_back();
            continue;
        }
        const double alpha = r(col, col) >= 0.0 ? -norm : norm;
        std::vector<double> v(rows - col, 0.0);
        v[0] = r(col, col) - alpha;
        for (std::size_t i = col + 1; i < rows; ++i) v[i - col] = r(i, col);
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0.0) {
            reflectors.emplace_back();
            continue;
        }
        for (std::size_t j = col; j < cols; ++j) {
            double dot = 0.0;
            for (std::size_t i = col; i < rows; ++i) dot += v[i - col] * r(i, j);
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = col; i < rows; ++i) r(i, j) -= f * v[i - col];
        }
        reflectors.push_back(std::move(v));
    }

    // Accumulate Q by applying reflectors to the leading k columns of I.
    Matrix q(rows, k);
    for (std::size_t j = 0; j < k; ++j) q(j, j) = 1.0;
    for (std::size_t col = k; col-- > 0;) {
        const auto& v = reflectors[col];
        if (v.empty()) continue;
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        for (std::size_t j = 0; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t i = col; i < rows; ++i) dot += v[i - col] * q(i, j);
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = col; i < rows; ++i) q(i, j) -= f * v[i - col];
        }
    }

    Matrix rr(k, cols);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < cols; ++j) rr(i, j) = r(i, j);
    return {std::move(q), std::move(rr)};
}

Matrix random_orthogonal(std::size_t n, SeededRng& rng) {
    if (n == 0) {
        throw std::invalid_argument("random_orthogonal: n must be >= 1");
    }
    Matrix g = Matrix::gaussian(n, n, rng);
    QrResult qr = householder_qr(g);
    // Fix signs so diag(R) > 0; makes the draw Haar and seed-deterministic.
    for (std::size_t j = 0; j < n; ++j) {
        if (qr.r(j, j) < 0.0) {
            for (std::size_t i = 0; i < n; ++i) qr.q(i, j) = -qr.q(i, j);
        }
    }
    return qr.q;
}

Matrix orthonormal_columns(const Matrix& m, double tol) {
    const std::size_t rows = m.rows(), cols = m.cols();
    if (rows == 0 || cols == 0) return Matrix(rows, 0);

    // Modified Gram-Schmidt with column dropping.
    std::vector<std::vector<double>> basis;
    double max_norm = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows; ++i) s += m(i, j) * m(i, j);
        max_norm = std::max(max_norm, std::sqrt(s));
    }
    if (max_norm == 0.0) return Matrix(rows, 0);

    for (std::size_t j = 0; j < cols; ++j) {
        std::vector<double> v(rows);
        for (std::size_t i = 0; i < rows; ++i) v[i] = m(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t i = 0; i < rows; ++i) dot += b[i] * v[i];
                for (std::size_t i = 0; i < rows; ++i) v[i] -= dot * b[i];
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > tol * max_norm) {
            for (double& x : v) x /= norm;
            basis.push_back(std::move(v));
        }
    }

    Matrix q(rows, basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j)
        for (std::size_t i = 0; i < rows; ++i) q(i, j) = basis[j][i];
    return q;
}

}  // namespace blocklab
