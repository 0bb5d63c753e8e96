#include <cmath>

#include "blocklab/info.hpp"
#include "blocklab/linalg.hpp"
#include "blocklab/spectral.hpp"
#include "blocklab/synth.hpp"
#include "blocklab/topology.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace blocklab;

TEST_SUITE_BEGIN("synth");

TEST_CASE("generators replay identically for the same spec and stream index") {
    for (const auto kind :
         {TaskKind::highrank_recovery, TaskKind::extreme_modular, TaskKind::factorized_manifold}) {
        TaskSpec spec;
        spec.kind = kind;
        spec.dim = 8;
        spec.groups = 2;
        spec.seed = 404;
        const TaskData a = make_task(spec);
        const TaskData b = make_task(spec);
        const TaskBatch ba = a.source.next(Split::train, 0, 16);
        const TaskBatch bb = b.source.next(Split::train, 0, 16);
        CHECK(ba.x == bb.x);
        CHECK(ba.y == bb.y);
        // Different stream indices and splits give different draws.
        const TaskBatch bc = a.source.next(Split::train, 1, 16);
        const TaskBatch bv = a.source.next(Split::val, 0, 16);
        CHECK(ba.x != bc.x);
        CHECK(ba.x != bv.x);
    }
}

TEST_CASE("highrank_recovery: noiseless target reproduces Qx; spectrum is flat") {
    TaskSpec spec;
    spec.kind = TaskKind::highrank_recovery;
    spec.dim = 16;
    spec.noise_sigma = 0.0;
    spec.seed = 7;
    const TaskData data = make_task(spec);
    const TaskBatch b = data.source.next(Split::train, 3, 8);

    // Recover Q from the generator's own law stream and check y = Q x.
    SeededRng target_rng(spec.seed, 0x7A);
    const Matrix q = random_orthogonal(16, target_rng);
    const Matrix expect = matmul_nt(b.x, q);
    CHECK((expect - b.y).max_abs() <= 1e-12);

    // Orthogonal target: entropy effective rank equals the dimension.
    CHECK(effrank_entropy(svd_values(q)) == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("extreme_modular: cross-group NMI is at the noise floor") {
    TaskSpec spec;
    spec.kind = TaskKind::extreme_modular;
    spec.dim = 16;
    spec.groups = 4;
    spec.seed = 11;
    const Matrix x = sample_inputs(spec, 10000);
    const NmiMatrix c = pairwise_nmi(x, 16);
    for (std::size_t i = 0; i < 16; ++i) {
        for (std::size_t j = i + 1; j < 16; ++j) {
            if (i / 4 != j / 4) CHECK(c.values(i, j) <= 0.05);
        }
    }
}

TEST_CASE("extreme_modular: aligned per-block least squares hits the noise floor") {
    TaskSpec spec;
    spec.kind = TaskKind::extreme_modular;
    spec.dim = 12;
    spec.groups = 3;
    spec.noise_sigma = 0.01;
    spec.scramble = false;
    spec.seed = 13;
    const TaskData data = make_task(spec);
    const TaskBatch train_b = data.source.next(Split::train, 0, 4096);
    const TaskBatch val_b = data.source.next(Split::val, 0, 2048);

    // Solve least squares per aligned contiguous block and evaluate on val.
    double val_mse = 0.0;
    const std::size_t gs = 4;
    for (std::size_t g = 0; g < 3; ++g) {
        Matrix xg(train_b.x.rows(), gs), yg(train_b.y.rows(), gs);
        for (std::size_t s = 0; s < train_b.x.rows(); ++s) {
            for (std::size_t i = 0; i < gs; ++i) {
                xg(s, i) = train_b.x(s, g * gs + i);
                yg(s, i) = train_b.y(s, g * gs + i);
            }
        }
        const Matrix w = oracles::least_squares(xg, yg);
        for (std::size_t s = 0; s < val_b.x.rows(); ++s) {
            for (std::size_t i = 0; i < gs; ++i) {
                double pred = 0.0;
                for (std::size_t j = 0; j < gs; ++j) pred += w(i, j) * val_b.x(s, g * gs + j);
                const double r = pred - val_b.y(s, g * gs + i);
                val_mse += r * r;
            }
        }
    }
    val_mse /= static_cast<double>(val_b.x.rows() * 12);
    // Noise floor sigma^2 = 1e-4 with estimation slack.
    CHECK(val_mse <= 1.3e-4);
}

TEST_CASE("extreme_modular: scramble hides and exports the partition") {
    TaskSpec spec;
    spec.kind = TaskKind::extreme_modular;
    spec.dim = 24;
    spec.groups = 4;
    spec.scramble = true;
    spec.seed = 17;
    const TaskData data = make_task(spec);
    REQUIRE(data.true_partition.has_value());
    REQUIRE(data.hidden_permutation.has_value());
    CHECK_FALSE(data.hidden_permutation->is_identity());
    CHECK(data.true_partition->k == 4);
    CHECK(data.true_partition->equal_sized());

    SUBCASE("NMI-Ward on samples recovers the hidden partition") {
        const Matrix x = sample_inputs(spec, 10000);
        const NmiMatrix c = pairwise_nmi(x, 16);
        const BlockPartition recovered = partition_nmi_ward(c, 4);
        CHECK(oracles::adjusted_rand(recovered.assignment, data.true_partition->assignment) ==
              doctest::Approx(1.0));
    }
    SUBCASE("ground truth has strictly minimal regret among 100 random partitions") {
        const Matrix x = sample_inputs(spec, 10000);
        const NmiMatrix c = pairwise_nmi(x, 16);
        const double base = topological_regret(*data.true_partition, c);
        for (std::uint64_t s = 0; s < 100; ++s) {
            SeededRng rng(s, 0xB2);
            const BlockPartition p = partition_random(24, 4, rng);
            if (p.assignment == data.true_partition->assignment) continue;
            CHECK(topological_regret(p, c) > base);
        }
    }
}

TEST_CASE("factorized_manifold: cross-group covariance vanishes, per-group rank is the latent dim") {
    TaskSpec spec;
    spec.kind = TaskKind::factorized_manifold;
    spec.dim = 32;
    spec.groups = 4;
    spec.noise_sigma = 0.0;
    spec.seed = 19;
    const TaskData data = make_task(spec);
    REQUIRE(data.latent_dims == std::vector<std::size_t>(4, 4));  // group size 8, latent 4

    const TaskBatch b = data.source.next(Split::train, 0, 20000);
    CHECK(b.y == b.x);  // reconstruction source

    // Center columns.
    Matrix x = b.x;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean /= static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) -= mean;
    }
    const Matrix cov = matmul_tn(x, x) * (1.0 / static_cast<double>(x.rows()));

    const std::size_t gs = 8;
    const auto block_frob = [&](std::size_t gi, std::size_t gj) {
        double s = 0.0;
        for (std::size_t i = 0; i < gs; ++i)
            for (std::size_t j = 0; j < gs; ++j) {
                const double v = cov(gi * gs + i, gj * gs + j);
                s += v * v;
            }
        return std::sqrt(s);
    };
    for (std::size_t gi = 0; gi < 4; ++gi) {
        for (std::size_t gj = gi + 1; gj < 4; ++gj) {
            const double cross = block_frob(gi, gj);
            const double norm = std::sqrt(block_frob(gi, gi) * block_frob(gj, gj));
            CHECK(cross / norm <= 0.05);
        }
    }

    // Per-group effective rank of the centered data sub-matrix ~ latent +/- 1.
    for (std::size_t g = 0; g < 4; ++g) {
        Matrix xg(x.rows(), gs);
        for (std::size_t s = 0; s < x.rows(); ++s)
            for (std::size_t i = 0; i < gs; ++i) xg(s, i) = x(s, g * gs + i);
        const double er = effrank_entropy(svd_values(xg));
        CHECK(er >= 3.0);
        CHECK(er <= 5.0);
    }
}

TEST_CASE("factorized_manifold constructs at the full dim grid") {
    for (const std::size_t dim : {128, 256, 512, 1024}) {
        TaskSpec spec;
        spec.kind = TaskKind::factorized_manifold;
        spec.dim = dim;
        spec.groups = 8;
        spec.seed = 1;
        const TaskData data = make_task(spec);
        const TaskBatch b = data.source.next(Split::train, 0, 4);
        CHECK(b.x.cols() == dim);
    }
}

TEST_CASE("task spec validation") {
    TaskSpec bad;
    bad.kind = TaskKind::extreme_modular;
    bad.dim = 10;
    bad.groups = 3;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // not divisible
    bad.dim = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    TaskSpec manifold;
    manifold.kind = TaskKind::factorized_manifold;
    manifold.dim = 4;
    manifold.groups = 4;  // group size 1 < 2
    CHECK_THROWS_AS(manifold.validate(), std::invalid_argument);
}

TEST_CASE("gen_joint: independence, coupling, and the strength-0 alias") {
    SUBCASE("independent at large n has tiny MI") {
        const JointHistogram j = gen_joint(JointKind::independent, 0.0, 4, 4, 100000, 5);
        CHECK(mutual_information(j) <= 0.01);
    }
    SUBCASE("full coupling drives NMI toward 1") {
        const JointHistogram j = gen_joint(JointKind::coupled, 1.0, 4, 4, 20000, 6);
        CHECK(nmi(j).value >= 0.99);
    }
    SUBCASE("strength 0 equals the independent generator exactly") {
        const JointHistogram a = gen_joint(JointKind::independent, 0.0, 3, 5, 5000, 7);
        const JointHistogram b = gen_joint(JointKind::coupled, 0.0, 3, 5, 5000, 7);
        CHECK(a.counts() == b.counts());
    }
    CHECK_THROWS_AS(gen_joint(JointKind::independent, 0.0, 1, 4, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(gen_joint(JointKind::independent, 0.0, 4, 4, 0, 1), std::invalid_argument);
}

TEST_SUITE_END();
