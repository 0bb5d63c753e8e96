#include <cmath>
#include <sstream>

#include "blocklab/info.hpp"
#include "blocklab/rng.hpp"
#include "blocklab/synth.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace blocklab;

TEST_SUITE_BEGIN("info");

TEST_CASE("entropy basics (bits)") {
    CHECK(entropy({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(entropy({1.0, 0.0, 0.0}) == doctest::Approx(0.0));
    CHECK(entropy({0.75, 0.25}) == doctest::Approx(0.811278124459).epsilon(1e-9));
    CHECK_THROWS_AS(entropy({0.5, -0.1, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(entropy({0.4, 0.4}), std::invalid_argument);
}

TEST_CASE("mutual information of independent and coupled joints") {
    SUBCASE("product of marginals has zero MI") {
        JointHistogram j(2, 3);
        const std::uint64_t cx[2] = {2, 3};
        const std::uint64_t cy[3] = {1, 4, 5};
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t y = 0; y < 3; ++y) j.add(x, y, cx[x] * cy[y]);
        CHECK(std::abs(mutual_information(j)) <= 1e-12);
    }
    SUBCASE("perfect coupling gives one bit") {
        JointHistogram j(2, 2);
        j.add(0, 0, 5);
        j.add(1, 1, 5);
        CHECK(mutual_information(j) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches the definition-level sum on a seeded joint") {
        SeededRng rng(77);
        JointHistogram j(4, 3);
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t y = 0; y < 3; ++y) j.add(x, y, 1 + rng.next_below(50));
        const auto px = j.marginal_x();
        const auto py = j.marginal_y();
        double direct = 0.0;
        for (std::size_t x = 0; x < 4; ++x) {
            for (std::size_t y = 0; y < 3; ++y) {
                const double p = j.joint_p(x, y);
                if (p > 0) direct += p * std::log2(p / (px[x] * py[y]));
            }
        }
        CHECK(std::abs(mutual_information(j) - direct) <= 1e-10);
    }
}

TEST_CASE("MI symmetry and relabeling invariance") {
    SeededRng rng(13);
    JointHistogram j(5, 4);
    for (std::size_t x = 0; x < 5; ++x)
        for (std::size_t y = 0; y < 4; ++y) j.add(x, y, rng.next_below(30));
    j.add(0, 0, 1);  // ensure nonempty
    CHECK(mutual_information(j) == doctest::Approx(mutual_information(j.transposed())).epsilon(1e-13));

    // Relabel rows by a permutation.
    const auto p = PermutationVec::random(5, rng);
    JointHistogram rel(5, 4);
    for (std::size_t x = 0; x < 5; ++x)
        for (std::size_t y = 0; y < 4; ++y)
            if (j.count(x, y)) rel.add(p.mapping[x], y, j.count(x, y));
    CHECK(mutual_information(rel) == doctest::Approx(mutual_information(j)).epsilon(1e-13));
}

TEST_CASE("nmi endpoints and degenerate marginals") {
    SUBCASE("independent variables give 0") {
        JointHistogram j(2, 2);
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t y = 0; y < 2; ++y) j.add(x, y, 10);
        CHECK(nmi(j).value == doctest::Approx(0.0));
    }
    SUBCASE("identical variables give 1") {
        JointHistogram j(3, 3);
        for (std::size_t i = 0; i < 3; ++i) j.add(i, i, 7);
        CHECK(nmi(j).value == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("one constant marginal returns 0 with flag") {
        JointHistogram j(2, 3);
        j.add(0, 0, 3);
        j.add(0, 1, 4);
        j.add(0, 2, 5);
        const auto r = nmi(j);
        CHECK(r.value == 0.0);
        CHECK(r.degenerate_marginal);
    }
    SUBCASE("both constants are undefined") {
        JointHistogram j(2, 2);
        j.add(1, 1, 9);
        CHECK_THROWS_AS(nmi(j), std::invalid_argument);
    }
}

TEST_CASE("factorization loss equals mutual information") {
    SeededRng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        JointHistogram j(5, 4);
        for (std::size_t x = 0; x < 5; ++x)
            for (std::size_t y = 0; y < 4; ++y) j.add(x, y, rng.next_below(40));
        j.add(0, 0, 1);
        CHECK(std::abs(factorization_loss(j) - mutual_information(j)) <= 1e-10);
    }
    SUBCASE("independent joint has zero loss") {
        JointHistogram j(2, 2);
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t y = 0; y < 2; ++y) j.add(x, y, 25);
        CHECK(std::abs(factorization_loss(j)) <= 1e-12);
    }
}

TEST_CASE("Gibbs: no perturbed factorization beats the marginal one") {
    SeededRng rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        JointHistogram j(4, 4);
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t y = 0; y < 4; ++y) j.add(x, y, 1 + rng.next_below(20));
        const double optimum = factorization_loss(j);
        auto qx = j.marginal_x();
        auto qy = j.marginal_y();
        // Random perturbation, renormalized.
        double sx = 0.0, sy = 0.0;
        for (double& v : qx) {
            v = std::max(1e-6, v + rng.uniform(-0.2, 0.2));
            sx += v;
        }
        for (double& v : qy) {
            v = std::max(1e-6, v + rng.uniform(-0.2, 0.2));
            sy += v;
        }
        for (double& v : qx) v /= sx;
        for (double& v : qy) v /= sy;
        CHECK(kl_to_product(j, qx, qy) >= optimum - 1e-10);
    }
}

TEST_CASE("equal-frequency binning is deterministic, balanced, and tie-safe") {
    const std::vector<double> vals{5.0, 1.0, 3.0, 3.5, 2.0, 4.0, 0.0, 6.0};
    const auto bins = equal_frequency_bins(vals, 4);
    std::vector<int> counts(4, 0);
    for (auto b : bins) ++counts[b];
    for (int c : counts) CHECK(c == 2);
    CHECK(bins == equal_frequency_bins(vals, 4));
    CHECK_THROWS_AS(equal_frequency_bins(vals, 1), std::invalid_argument);

    SUBCASE("identical values share a bin") {
        const std::vector<double> tied{1.0, 2.0, 2.0, 2.0, 2.0, 3.0};
        const auto b = equal_frequency_bins(tied, 3);
        CHECK(b[1] == b[2]);
        CHECK(b[2] == b[3]);
        CHECK(b[3] == b[4]);
    }
    SUBCASE("a constant column lands in a single bin") {
        const std::vector<double> flat(64, 7.0);
        const auto b = equal_frequency_bins(flat, 8);
        for (auto v : b) CHECK(v == b[0]);
    }
}

TEST_CASE("pairwise_nmi: identical, independent and block-structured columns") {
    SeededRng rng(2024);
    const std::size_t n = 10000;

    SUBCASE("two identical columns have off-diagonal 1") {
        Matrix data(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = rng.normal();
            data(i, 0) = v;
            data(i, 1) = v;
        }
        const NmiMatrix c = pairwise_nmi(data, 16);
        CHECK(c.values(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(c.values(0, 0) == 1.0);
    }

    SUBCASE("independent noise stays below 0.05, calibrated by a permutation null") {
        Matrix data(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            data(i, 0) = rng.normal();
            data(i, 1) = rng.normal();
        }
        const double observed = pairwise_nmi(data, 16).values(0, 1);
        CHECK(observed <= 0.05);

        // Permutation-null oracle: shuffling one column must give the same
        // order of magnitude; the observed value must sit within the null
        // envelope (5 sigma).
        std::vector<double> null_samples;
        for (int rep = 0; rep < 12; ++rep) {
            std::vector<std::uint32_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
            rng.shuffle(idx);
            Matrix shuffled = data;
            for (std::size_t i = 0; i < n; ++i) shuffled(i, 1) = data(idx[i], 1);
            null_samples.push_back(pairwise_nmi(shuffled, 16).values(0, 1));
        }
        double mean = 0.0, var = 0.0;
        for (double v : null_samples) mean += v;
        mean /= null_samples.size();
        for (double v : null_samples) var += (v - mean) * (v - mean);
        var /= null_samples.size();
        CHECK(observed <= mean + 5.0 * std::sqrt(var) + 1e-4);
    }

    SUBCASE("within-group NMI dominates cross-group NMI for every pair") {
        TaskSpec spec;
        spec.kind = TaskKind::extreme_modular;
        spec.dim = 12;
        spec.groups = 3;
        spec.seed = 5;
        const Matrix data = sample_inputs(spec, n);
        const NmiMatrix c = pairwise_nmi(data, 16);
        double min_within = 1.0, max_cross = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
            for (std::size_t j = i + 1; j < 12; ++j) {
                const bool same = (i / 4) == (j / 4);
                if (same) min_within = std::min(min_within, c.values(i, j));
                else max_cross = std::max(max_cross, c.values(i, j));
            }
        }
        CHECK(min_within > max_cross);
    }
}

TEST_CASE("pairwise_nmi flags constant features and keeps the matrix valid") {
    Matrix data(100, 3);
    SeededRng rng(8);
    for (std::size_t i = 0; i < 100; ++i) {
        data(i, 0) = 1.0;  // constant
        data(i, 1) = rng.normal();
        data(i, 2) = rng.normal();
    }
    const NmiMatrix c = pairwise_nmi(data, 8);
    CHECK(c.degenerate[0]);
    CHECK_FALSE(c.degenerate[1]);
    CHECK(c.values(0, 1) == 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(c.values(i, i) == 1.0);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(c.values(i, j) == c.values(j, i));
            CHECK(c.values(i, j) >= 0.0);
            CHECK(c.values(i, j) <= 1.0);
        }
    }
}

TEST_CASE("NmiMatrix csv round trip") {
    NmiMatrix m;
    m.dim = 2;
    m.values = Matrix::from_data(2, 2, {1.0, 0.25, 0.25, 1.0});
    m.degenerate.assign(2, false);
    std::istringstream is(m.to_csv());
    const NmiMatrix back = NmiMatrix::read_csv(is);
    CHECK(back.dim == 2);
    CHECK(back.values == m.values);
}

TEST_SUITE_END();
