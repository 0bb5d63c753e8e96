#include "blocklab/spectral.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "blocklab/linalg.hpp"
#include "json.hpp"

namespace blocklab {

static void check_spectrum(const std::vector<double>& sigma, const char* op) {
    if (sigma.empty()) {
        throw std::invalid_argument(std::string(op) + ": empty spectrum");
    }
    double total = 0.0;
    for (double s : sigma) {
        if (s < 0.0 || !std::isfinite(s)) {
            throw std::invalid_argument(std::string(op) + ": spectrum must be finite and nonnegative");
        }
        total += s;
    }
    if (total == 0.0) {
        throw std::invalid_argument(std::string(op) + ": degenerate all-zero spectrum");
    }
}

double effrank_entropy(const std::vector<double>& sigma) {
    check_spectrum(sigma, "effrank_entropy");
    const double total = std::accumulate(sigma.begin(), sigma.end(), 0.0);
    double h = 0.0;
    for (double s : sigma) {
        if (s > 0.0) {
            const double p = s / total;
            h -= p * std::log(p);
        }
    }
    return std::exp(h);
}

std::size_t effrank_95(const std::vector<double>& sigma) {
    check_spectrum(sigma, "effrank_95");
    double energy = 0.0;
    for (double s : sigma) energy += s * s;
    const double threshold = 0.95 * energy;
    double cum = 0.0;
    for (std::size_t k = 0; k < sigma.size(); ++k) {
        cum += sigma[k] * sigma[k];
        if (cum >= threshold) return k + 1;
    }
    return sigma.size();
}

double nuclear_norm(const Matrix& m) {
    const auto sigma = svd_values(m);
    return std::accumulate(sigma.begin(), sigma.end(), 0.0);
}

double utilization_eta(double effrank, std::size_t param_count, std::size_t d) {
    if (d == 0 || param_count == 0) {
        throw std::invalid_argument("utilization_eta: zero divisor");
    }
    return effrank / (static_cast<double>(param_count) / static_cast<double>(d));
}

double commutator_norm(const Matrix& x, const Matrix& y) {
    if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
        throw std::invalid_argument("commutator_norm: inputs must be square and same size");
    }
    return operator_norm(matmul(x, y) - matmul(y, x));
}

double trotter_error(const Matrix& x, const Matrix& y, std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("trotter_error: n must be >= 1");
    }
    if (x.rows() != x.cols() || y.rows() != y.cols() || x.rows() != y.rows()) {
        throw std::invalid_argument("trotter_error: inputs must be square and same size");
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    const Matrix step = matmul(matrix_exp(x * inv_n), matrix_exp(y * inv_n));
    Matrix prod = Matrix::identity(x.rows());
    for (std::size_t i = 0; i < n; ++i) prod = matmul(prod, step);
    return operator_norm(matrix_exp(x + y) - prod);
}

SpectrumReport analyze_spectrum(const std::vector<double>& sigma,
                                std::size_t param_count, std::size_t d) {
    SpectrumReport rep;
    rep.effrank_entropy = effrank_entropy(sigma);
    rep.effrank_95 = effrank_95(sigma);
    rep.nuclear_norm = std::accumulate(sigma.begin(), sigma.end(), 0.0);
    rep.params_normalized = static_cast<double>(param_count) / static_cast<double>(d);
    rep.utilization_eta = utilization_eta(static_cast<double>(rep.effrank_95), param_count, d);
    return rep;
}

std::string SpectrumReport::to_json() const {
    nlohmann::json j{
        {"effrank_entropy", effrank_entropy},
        {"effrank_95", effrank_95},
        {"nuclear_norm", nuclear_norm},
        {"utilization_eta", utilization_eta},
        {"params_normalized", params_normalized},
    };
    return j.dump();
}

}  // namespace blocklab
