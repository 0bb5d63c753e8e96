#include "blocklab/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace blocklab {

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw std::invalid_argument("Matrix::from_data: data length " +
                                    std::to_string(data.size()) + " != rows*cols " +
                                    std::to_string(rows * cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    if (!m.all_finite()) {
        throw std::invalid_argument("Matrix::from_data: non-finite entry");
    }
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diag(const std::vector<double>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, SeededRng& rng,
                        double mean, double stddev) {
    Matrix m(rows, cols);
    for (double& v : m.data_) v = rng.normal(mean, stddev);
    return m;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

static void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

Matrix& Matrix::operator+=(const Matrix& o) {
    check_same_shape(*this, o, "Matrix::operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    check_same_shape(*this, o, "Matrix::operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

double Matrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    }
    const std::size_t m = a.rows(), n = b.rows(), k = a.cols();
    Matrix c(m, n);
    // Tiled over B rows so a tile stays cache-resident across the full sweep
    // of A. Each output element is one fixed-order reduction, so the result
    // is bit-stable regardless of threading.
    constexpr std::size_t kTile = 16;
    const std::size_t tiles = (n + kTile - 1) / kTile;
#pragma omp parallel for schedule(static) if (m * n * k > 262144)
    for (std::size_t jt = 0; jt < tiles; ++jt) {
        const std::size_t j0 = jt * kTile;
        const std::size_t j1 = std::min(n, j0 + kTile);
        for (std::size_t i = 0; i < m; ++i) {
            const double* ai = a.row_ptr(i);
            double* ci = c.row_ptr(i);
            for (std::size_t j = j0; j < j1; ++j) {
                const double* bj = b.row_ptr(j);
                // Eight accumulators keep the FMA pipelines busy.
                double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
                double s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
                std::size_t t = 0;
                for (; t + 8 <= k; t += 8) {
                    s0 += ai[t] * bj[t];
                    s1 += ai[t + 1] * bj[t + 1];
                    s2 += ai[t + 2] * bj[t + 2];
                    s3 += ai[t + 3] * bj[t + 3];
                    s4 += ai[t + 4] * bj[t + 4];
                    s5 += ai[t + 5] * bj[t + 5];
                    s6 += ai[t + 6] * bj[t + 6];
                    s7 += ai[t + 7] * bj[t + 7];
                }
                double s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
                for (; t < k; ++t) s += ai[t] * bj[t];
                ci[j] = s;
            }
        }
    }
    return c;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimension mismatch");
    }
    return matmul_nt(a, b.transposed());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: inner dimension mismatch");
    }
    return matmul(a.transposed(), b);
}

std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) {
        throw std::invalid_argument("matvec: dimension mismatch");
    }
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row_ptr(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += ai[j] * x[j];
        y[i] = s;
    }
    return y;
}

void Matrix::write_csv(std::ostream& out) const {
    out << rows_ << "," << cols_ << "\n";
    char buf[32];
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            const auto res = std::to_chars(buf, buf + sizeof(buf), (*this)(i, j));
            if (j) out << ',';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
}

std::string Matrix::to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

Matrix Matrix::read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("Matrix::read_csv: empty input");
    }
    std::size_t rows = 0, cols = 0;
    {
        std::istringstream hs(line);
        char comma = 0;
        if (!(hs >> rows >> comma >> cols) || comma != ',') {
            throw std::runtime_error("Matrix::read_csv: malformed header '" + line + "'");
        }
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("Matrix::read_csv: truncated at row " + std::to_string(i));
        }
        std::istringstream rs(line);
        std::string cell;
        for (std::size_t j = 0; j < cols; ++j) {
            if (!std::getline(rs, cell, ',')) {
                throw std::runtime_error("Matrix::read_csv: short row " + std::to_string(i));
            }
            data.push_back(std::stod(cell));
        }
    }
    return from_data(rows, cols, std::move(data));
}

Matrix Matrix::parse_csv(const std::string& text) {
    std::istringstream is(text);
    return read_csv(is);
}

PermutationVec PermutationVec::identity(std::size_t n) {
    PermutationVec p;
    p.mapping.resize(n);
    std::iota(p.mapping.begin(), p.mapping.end(), 0u);
    return p;
}

PermutationVec PermutationVec::from_mapping(std::vector<std::uint32_t> mapping) {
    std::vector<bool> seen(mapping.size(), false);
    for (std::uint32_t v : mapping) {
        if (v >= mapping.size() || seen[v]) {
            throw std::invalid_argument("PermutationVec: mapping is not a bijection");
        }
        seen[v] = true;
    }
    PermutationVec p;
    p.mapping = std::move(mapping);
    return p;
}

PermutationVec PermutationVec::random(std::size_t n, SeededRng& rng) {
    PermutationVec p = identity(n);
    rng.shuffle(p.mapping);
    return p;
}

PermutationVec PermutationVec::inverse() const {
    PermutationVec inv;
    inv.mapping.resize(mapping.size());
    for (std::size_t i = 0; i < mapping.size(); ++i) inv.mapping[mapping[i]] = static_cast<std::uint32_t>(i);
    return inv;
}

PermutationVec PermutationVec::compose(const PermutationVec& other) const {
    if (mapping.size() != other.mapping.size()) {
        throw std::invalid_argument("PermutationVec::compose: size mismatch");
    }
    // out[i] = other_applied_then_this => out[i] = other.mapping[mapping[i]]
    PermutationVec r;
    r.mapping.resize(mapping.size());
    for (std::size_t i = 0; i < mapping.size(); ++i) r.mapping[i] = other.mapping[mapping[i]];
    return r;
}

bool PermutationVec::is_identity() const {
    for (std::size_t i = 0; i < mapping.size(); ++i)
        if (mapping[i] != i) return false;
    return true;
}

Matrix permute_rows(const Matrix& m, const PermutationVec& p) {
    if (p.size() != m.rows()) {
        throw std::invalid_argument("permute_rows: permutation length " +
                                    std::to_string(p.size()) + " != rows " +
                                    std::to_string(m.rows()));
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row_ptr(p.mapping[i]);
        std::copy(src, src + m.cols(), out.row_ptr(i));
    }
    return out;
}

Matrix permute_cols(const Matrix& m, const PermutationVec& p) {
    if (p.size() != m.cols()) {
        throw std::invalid_argument("permute_cols: permutation length " +
                                    std::to_string(p.size()) + " != cols " +
                                    std::to_string(m.cols()));
    }
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* src = m.row_ptr(i);
        double* dst = out.row_ptr(i);
        for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = src[p.mapping[j]];
    }
    return out;
}

std::vector<double> permute_vec(const std::vector<double>& v, const PermutationVec& p) {
    if (p.size() != v.size()) {
        throw std::invalid_argument("permute_vec: permutation length mismatch");
    }
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[p.mapping[i]];
    return out;
}

}  // namespace blocklab
