#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "blocklab/rng.hpp"

namespace blocklab {

/// Dense real matrix, row-major. The universal numeric carrier.
class Matrix {
public:
    Matrix() = default;

    /// Zero-filled rows x cols.
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    /// Takes ownership of row-major data; rejects size mismatch and
    /// non-finite entries.
    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diag(const std::vector<double>& d);

    /// Entries drawn i.i.d. N(mean, stddev^2) from rng.
    static Matrix gaussian(std::size_t rows, std::size_t cols, SeededRng& rng,
                           double mean = 0.0, double stddev = 1.0);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    Matrix transposed() const;

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);
    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }

    bool operator==(const Matrix& o) const = default;

    double frobenius_norm() const;
    double max_abs() const;

    /// CSV layout: first line "rows,cols", then one matrix row per line,
    /// values at full double round-trip precision.
    void write_csv(std::ostream& out) const;
    std::string to_csv() const;
    static Matrix read_csv(std::istream& in);
    static Matrix parse_csv(const std::string& text);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A * B^T (cache-friendly kernel; the other products route through it)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// C = A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// y = A * x
std::vector<double> matvec(const Matrix& a, const std::vector<double>& x);

/// Bijection on 0..n-1. Convention used everywhere: applying p to a matrix
/// gives output row i = input row p.mapping[i] (same rule for vector entries
/// and for column permutations).
struct PermutationVec {
    std::vector<std::uint32_t> mapping;

    std::size_t size() const { return mapping.size(); }

    static PermutationVec identity(std::size_t n);
    static PermutationVec from_mapping(std::vector<std::uint32_t> mapping);
    static PermutationVec random(std::size_t n, SeededRng& rng);

    PermutationVec inverse() const;
    /// (this ∘ other): apply other first, then this.
    PermutationVec compose(const PermutationVec& other) const;
    bool is_identity() const;
};

Matrix permute_rows(const Matrix& m, const PermutationVec& p);
Matrix permute_cols(const Matrix& m, const PermutationVec& p);
std::vector<double> permute_vec(const std::vector<double>& v, const PermutationVec& p);

}  // namespace blocklab
