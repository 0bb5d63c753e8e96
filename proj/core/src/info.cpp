#include "blocklab/info.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace blocklab {

JointHistogram::JointHistogram(std::size_t card_x, std::size_t card_y)
    : card_x_(card_x), card_y_(card_y), counts_(card_x * card_y, 0) {
    if (card_x == 0 || card_y == 0) {
        throw std::invalid_argument("JointHistogram: cardinalities must be positive");
    }
}

JointHistogram JointHistogram::from_counts(std::size_t card_x, std::size_t card_y,
                                           std::vector<std::uint64_t> counts) {
    JointHistogram j(card_x, card_y);
    if (counts.size() != card_x * card_y) {
        throw std::invalid_argument("JointHistogram::from_counts: wrong cell count");
    }
    j.counts_ = std::move(counts);
    j.total_ = std::accumulate(j.counts_.begin(), j.counts_.end(), std::uint64_t{0});
    return j;
}

void JointHistogram::add(std::size_t x, std::size_t y, std::uint64_t n) {
    if (x >= card_x_ || y >= card_y_) {
        throw std::out_of_range("JointHistogram::add: cell out of range");
    }
    counts_[x * card_y_ + y] += n;
    total_ += n;
}

double JointHistogram::joint_p(std::size_t x, std::size_t y) const {
    if (total_ == 0) {
        throw std::invalid_argument("JointHistogram: empty histogram");
    }
    return static_cast<double>(count(x, y)) / static_cast<double>(total_);
}

std::vector<double> JointHistogram::marginal_x() const {
    if (total_ == 0) {
        throw std::invalid_argument("JointHistogram: empty histogram");
    }
    std::vector<double> p(card_x_, 0.0);
    for (std::size_t x = 0; x < card_x_; ++x) {
        std::uint64_t s = 0;
        for (std::size_t y = 0; y < card_y_; ++y) s += count(x, y);
        p[x] = static_cast<double>(s) / static_cast<double>(total_);
    }
    return p;
}

std::vector<double> JointHistogram::marginal_y() const {
    if (total_ == 0) {
        throw std::invalid_argument("JointHistogram: empty histogram");
    }
    std::vector<double> p(card_y_, 0.0);
    for (std::size_t y = 0; y < card_y_; ++y) {
        std::uint64_t s = 0;
        for (std::size_t x = 0; x < card_x_; ++x) s += count(x, y);
        p[y] = static_cast<double>(s) / static_cast<double>(total_);
    }
    return p;
}

JointHistogram JointHistogram::transposed() const {
    JointHistogram t(card_y_, card_x_);
    for (std::size_t x = 0; x < card_x_; ++x)
        for (std::size_t y = 0; y < card_y_; ++y)
            if (count(x, y)) t.add(y, x, count(x, y));
    return t;
}

double entropy(const std::vector<double>& p) {
    double total = 0.0;
    for (double v : p) {
        if (v < 0.0) {
            throw std::invalid_argument("entropy: negative probability mass");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("entropy: distribution does not sum to 1");
    }
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log2(v);
    }
    return h;
}

static double entropy_unchecked(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log2(v);
    }
    return h;
}

double mutual_information(const JointHistogram& j) {
    if (j.total() == 0) {
        throw std::invalid_argument("mutual_information: empty histogram");
    }
    const double hx = entropy_unchecked(j.marginal_x());
    const double hy = entropy_unchecked(j.marginal_y());
    std::vector<double> joint;
    joint.reserve(j.card_x() * j.card_y());
    for (std::size_t x = 0; x < j.card_x(); ++x)
        for (std::size_t y = 0; y < j.card_y(); ++y) joint.push_back(j.joint_p(x, y));
    return hx + hy - entropy_unchecked(joint);
}

NmiResult nmi(const JointHistogram& j) {
    if (j.total() == 0) {
        throw std::invalid_argument("nmi: empty histogram");
    }
    const double hx = entropy_unchecked(j.marginal_x());
    const double hy = entropy_unchecked(j.marginal_y());
    if (hx == 0.0 && hy == 0.0) {
        throw std::invalid_argument("nmi: undefined, both marginal entropies are zero");
    }
    if (hx == 0.0 || hy == 0.0) {
        return {0.0, true};
    }
    return {2.0 * mutual_information(j) / (hx + hy), false};
}

double factorization_loss(const JointHistogram& j) {
    if (j.total() == 0) {
        throw std::invalid_argument("factorization_loss: empty histogram");
    }
    const auto px = j.marginal_x();
    const auto py = j.marginal_y();
    double kl = 0.0;
    for (std::size_t x = 0; x < j.card_x(); ++x) {
        for (std::size_t y = 0; y < j.card_y(); ++y) {
            const double p = j.joint_p(x, y);
            if (p > 0.0) kl += p * std::log2(p / (px[x] * py[y]));
        }
    }
    return kl;
}

double kl_to_product(const JointHistogram& j, const std::vector<double>& qx,
                     const std::vector<double>& qy) {
    if (j.total() == 0) {
        throw std::invalid_argument("kl_to_product: empty histogram");
    }
    if (qx.size() != j.card_x() || qy.size() != j.card_y()) {
        throw std::invalid_argument("kl_to_product: marginal size mismatch");
    }
    double kl = 0.0;
    for (std::size_t x = 0; x < j.card_x(); ++x) {
        for (std::size_t y = 0; y < j.card_y(); ++y) {
            const double p = j.joint_p(x, y);
            if (p == 0.0) continue;
            const double q = qx[x] * qy[y];
            if (q <= 0.0) return std::numeric_limits<double>::infinity();
            kl += p * std::log2(p / q);
        }
    }
    return kl;
}

std::vector<std::uint32_t> equal_frequency_bins(const std::vector<double>& values,
                                                std::size_t bins) {
    if (bins < 2) {
        throw std::invalid_argument("equal_frequency_bins: bins must be >= 2");
    }
    const std::size_t n = values.size();
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    // Ties share a bin: equal values must not straddle a boundary, or a
    // constant feature would look informative.
    std::vector<std::uint32_t> bin(n, 0);
    std::uint32_t prev_bin = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
        std::uint32_t b = static_cast<std::uint32_t>(rank * bins / n);
        if (rank > 0 && values[order[rank]] == values[order[rank - 1]]) b = prev_bin;
        bin[order[rank]] = b;
        prev_bin = b;
    }
    return bin;
}

NmiMatrix pairwise_nmi(const Matrix& data, std::size_t bins) {
    if (data.rows() < 2) {
        throw std::invalid_argument("pairwise_nmi: need at least 2 samples");
    }
    if (bins < 2) {
        throw std::invalid_argument("pairwise_nmi: bins must be >= 2");
    }
    const std::size_t n = data.rows(), d = data.cols();

    std::vector<std::vector<std::uint32_t>> binned(d);
    std::vector<double> column(n);
    for (std::size_t f = 0; f < d; ++f) {
        for (std::size_t i = 0; i < n; ++i) column[i] = data(i, f);
        binned[f] = equal_frequency_bins(column, bins);
    }

    NmiMatrix out;
    out.dim = d;
    out.values = Matrix(d, d);
    out.degenerate.assign(d, false);
    for (std::size_t f = 0; f < d; ++f) {
        out.values(f, f) = 1.0;
        std::vector<std::uint64_t> marg(bins, 0);
        for (std::uint32_t b : binned[f]) ++marg[b];
        std::size_t nonzero = 0;
        for (auto c : marg) nonzero += c > 0;
        out.degenerate[f] = nonzero <= 1;
    }

    // Pairs (i, j) with i < j flattened for a deterministic parallel loop.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    pairs.reserve(d * (d - 1) / 2);
    for (std::uint32_t i = 0; i < d; ++i)
        for (std::uint32_t j = i + 1; j < d; ++j) pairs.emplace_back(i, j);

#pragma omp parallel for schedule(dynamic, 64)
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        JointHistogram hist(bins, bins);
        for (std::size_t s = 0; s < n; ++s) hist.add(binned[i][s], binned[j][s]);
        double v = 0.0;
        if (!(out.degenerate[i] && out.degenerate[j])) {
            v = nmi(hist).value;
        }
        // Estimator can drift a hair outside [0,1]; pin it.
        v = std::clamp(v, 0.0, 1.0);
        out.values(i, j) = v;
        out.values(j, i) = v;
    }
    return out;
}

void NmiMatrix::write_csv(std::ostream& out) const {
    for (std::size_t j = 0; j < dim; ++j) {
        if (j) out << ',';
        out << 'f' << j;
    }
    out << '\n';
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (j) out << ',';
            out << values(i, j);
        }
        out << '\n';
    }
}

std::string NmiMatrix::to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
}

NmiMatrix NmiMatrix::read_csv(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) {
        throw std::runtime_error("NmiMatrix::read_csv: empty input");
    }
    const std::size_t d = static_cast<std::size_t>(
        std::count(header.begin(), header.end(), ',') + 1);
    NmiMatrix m;
    m.dim = d;
    m.values = Matrix(d, d);
    m.degenerate.assign(d, false);
    std::string line;
    for (std::size_t i = 0; i < d; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error("NmiMatrix::read_csv: truncated table");
        }
        std::istringstream rs(line);
        std::string cell;
        for (std::size_t j = 0; j < d; ++j) {
            if (!std::getline(rs, cell, ',')) {
                throw std::runtime_error("NmiMatrix::read_csv: short row");
            }
            m.values(i, j) = std::stod(cell);
        }
    }
    return m;
}

}  // namespace blocklab
