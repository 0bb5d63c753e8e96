#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "blocklab/matrix.hpp"

namespace blocklab {

/// Discrete joint distribution over two categorical variables, kept as raw
/// counts. All information quantities in this module are in bits.
class JointHistogram {
public:
    JointHistogram(std::size_t card_x, std::size_t card_y);

    static JointHistogram from_counts(std::size_t card_x, std::size_t card_y,
                                      std::vector<std::uint64_t> counts);

    std::size_t card_x() const { return card_x_; }
    std::size_t card_y() const { return card_y_; }
    std::uint64_t total() const { return total_; }

    std::uint64_t count(std::size_t x, std::size_t y) const { return counts_[x * card_y_ + y]; }
    void add(std::size_t x, std::size_t y, std::uint64_t n = 1);

    double joint_p(std::size_t x, std::size_t y) const;
    std::vector<double> marginal_x() const;
    std::vector<double> marginal_y() const;

    JointHistogram transposed() const;
    const std::vector<std::uint64_t>& counts() const { return counts_; }

private:
    std::size_t card_x_;
    std::size_t card_y_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t total_ = 0;
};

/// Shannon entropy in bits; p must sum to 1 (1e-9 slack) with no negative mass.
double entropy(const std::vector<double>& p);

/// I(X;Y) = H(X) + H(Y) - H(X,Y), bits.
double mutual_information(const JointHistogram& j);

struct NmiResult {
    double value = 0.0;
    /// Set when exactly one marginal has zero entropy; the value is then
    /// defined as 0 so topology code can place constant features anywhere.
    bool degenerate_marginal = false;
};

/// 2 I(X;Y) / (H(X) + H(Y)). Throws when both marginal entropies are zero.
NmiResult nmi(const JointHistogram& j);

/// D_KL(P || P_X (x) P_Y), computed term by term from the definition. Equals
/// mutual_information(j) analytically; the two routes cross-check each other.
double factorization_loss(const JointHistogram& j);

/// D_KL(P || Q_X (x) Q_Y) for externally supplied factor marginals. Infinite
/// when some Q cell is zero where P has mass.
double kl_to_product(const JointHistogram& j, const std::vector<double>& qx,
                     const std::vector<double>& qy);

/// Symmetric pairwise-NMI table with unit diagonal.
struct NmiMatrix {
    std::size_t dim = 0;
    Matrix values;
    /// Features whose discretized marginal entropy is zero (constant columns).
    std::vector<bool> degenerate;

    void write_csv(std::ostream& out) const;
    std::string to_csv() const;
    static NmiMatrix read_csv(std::istream& in);
};

/// Discretizes each column of data (samples x features) into `bins`
/// equal-frequency bins and computes NMI for every feature pair.
NmiMatrix pairwise_nmi(const Matrix& data, std::size_t bins);

/// Equal-frequency bin ids for one feature column; ties broken by sample
/// index so the result is deterministic for any input.
std::vector<std::uint32_t> equal_frequency_bins(const std::vector<double>& values,
                                                std::size_t bins);

}  // namespace blocklab
