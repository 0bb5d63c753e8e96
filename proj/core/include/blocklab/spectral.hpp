#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "blocklab/matrix.hpp"

namespace blocklab {

/// Rank and efficiency diagnostics computed from a singular spectrum.
/// effrank_entropy uses natural log inside the exponential (exp pairs with
/// ln); the information module works in bits -- bases never mix within one
/// formula.
struct SpectrumReport {
    double effrank_entropy = 0.0;
    std::size_t effrank_95 = 0;
    double nuclear_norm = 0.0;
    double utilization_eta = 0.0;
    double params_normalized = 0.0;  // parameter count / embedding dimension

    /// One JSON object per analyzed matrix, used by the CLI report files.
    std::string to_json() const;
};

/// exp(-sum p_i ln p_i) with p_i = sigma_i / sum(sigma). Zeros contribute 0.
/// Requires at least one positive value.
double effrank_entropy(const std::vector<double>& sigma);

/// Smallest k with sum_{i<=k} sigma_i^2 >= 0.95 * sum sigma_i^2. A tie at
/// exactly 0.95 qualifies.
std::size_t effrank_95(const std::vector<double>& sigma);

/// Sum of singular values.
double nuclear_norm(const Matrix& m);

/// effrank / (param_count / d).
double utilization_eta(double effrank, std::size_t param_count, std::size_t d);

/// Operator norm of XY - YX.
double commutator_norm(const Matrix& x, const Matrix& y);

/// ||e^{X+Y} - (e^{X/n} e^{Y/n})^n|| in operator norm.
double trotter_error(const Matrix& x, const Matrix& y, std::size_t n);

/// Full report for a matrix given its parameter budget.
SpectrumReport analyze_spectrum(const std::vector<double>& sigma,
                                std::size_t param_count, std::size_t d);

}  // namespace blocklab
