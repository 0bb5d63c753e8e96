#pragma once

#include <vector>

#include "blocklab/matrix.hpp"
#include "blocklab/rng.hpp"

namespace blocklab {

/// All singular values of m, sorted descending. One-sided Jacobi on the
/// columns of the taller orientation; accurate and dependency-free at the
/// dimensions this project needs (<= 2048).
std::vector<double> svd_values(const Matrix& m);

/// Largest singular value.
double operator_norm(const Matrix& m);

/// e^m for square m. Scaling-and-squaring with a degree-20 Taylor kernel on
/// the scaled matrix (||m/2^s||_1 <= 1/2).
Matrix matrix_exp(const Matrix& m);

/// Haar-distributed orthogonal n x n matrix: QR of a seeded Gaussian with the
/// sign convention diag(R) > 0.
Matrix random_orthogonal(std::size_t n, SeededRng& rng);

/// Thin Householder QR: returns Q (rows x min(rows, cols)) with orthonormal
/// columns spanning the column space of m, and R upper-triangular.
struct QrResult {
    Matrix q;
    Matrix r;
};
QrResult householder_qr(const Matrix& m);

/// Orthonormal basis of the column space of m; columns whose residual norm
/// falls below tol (relative to the largest column) are dropped.
Matrix orthonormal_columns(const Matrix& m, double tol = 1e-10);

}  // namespace blocklab
