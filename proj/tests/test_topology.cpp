#include <set>

#include "blocklab/topology.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace blocklab;

namespace {

// Synthetic block-structured NMI table: within-group w, cross-group c.
NmiMatrix block_nmi(std::size_t dim, std::size_t groups, double within, double cross) {
    NmiMatrix m;
    m.dim = dim;
    m.values = Matrix(dim, dim);
    m.degenerate.assign(dim, false);
    const std::size_t gs = dim / groups;
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            if (i == j) m.values(i, j) = 1.0;
            else m.values(i, j) = (i / gs == j / gs) ? within : cross;
        }
    }
    return m;
}

std::vector<std::uint32_t> group_labels(std::size_t dim, std::size_t groups) {
    std::vector<std::uint32_t> l(dim);
    const std::size_t gs = dim / groups;
    for (std::size_t i = 0; i < dim; ++i) l[i] = static_cast<std::uint32_t>(i / gs);
    return l;
}

}  // namespace

TEST_SUITE_BEGIN("topology");

TEST_CASE("partition invariants and JSON round trip") {
    const auto p = BlockPartition::from_assignment({0, 1, 0, 2, 1, 2});
    CHECK(p.k == 3);
    CHECK(p.block_sizes == std::vector<std::size_t>{2, 2, 2});
    CHECK(p.block_members(1) == std::vector<std::uint32_t>{1, 4});
    CHECK(BlockPartition::parse_json(p.to_json()) == p);
    CHECK_THROWS_AS(BlockPartition::from_assignment({0, 2}), std::invalid_argument);  // gap
}

TEST_CASE("partition_random: sizes, determinism, bounds") {
    SeededRng rng(10);
    const auto p = partition_random(6, 1, rng);
    CHECK(p.k == 1);
    CHECK(p.block_sizes[0] == 6);

    SeededRng r2(10);
    const auto q = partition_random(6, 6, r2);
    CHECK(q.k == 6);
    for (auto s : q.block_sizes) CHECK(s == 1);

    SeededRng a(42), b(42);
    CHECK(partition_random(8, 2, a) == partition_random(8, 2, b));
    const auto sizes = partition_random(10, 3, a).block_sizes;
    for (auto s : sizes) CHECK((s == 3 || s == 4));

    SeededRng r3(1);
    CHECK_THROWS_AS(partition_random(4, 5, r3), std::invalid_argument);
    CHECK_THROWS_AS(partition_random(4, 0, r3), std::invalid_argument);
}

TEST_CASE("partition_nmi_ward recovers clean block structure") {
    const NmiMatrix c = block_nmi(12, 3, 0.9, 0.05);
    const auto p = partition_nmi_ward(c, 3);
    CHECK(oracles::adjusted_rand(p.assignment, group_labels(12, 3)) == doctest::Approx(1.0));
    CHECK(partition_nmi_ward(c, 1).k == 1);
    CHECK(partition_nmi_ward(c, 12).k == 12);
    CHECK_THROWS_AS(partition_nmi_ward(c, 0), std::invalid_argument);
    CHECK_THROWS_AS(partition_nmi_ward(c, 13), std::invalid_argument);
}

TEST_CASE("partition_quotient matches the BFS closure oracle") {
    SUBCASE("all below eps gives singletons") {
        const NmiMatrix c = block_nmi(6, 3, 0.2, 0.1);
        CHECK(partition_quotient(c, 0.5).k == 6);
    }
    SUBCASE("all above eps gives one block") {
        const NmiMatrix c = block_nmi(6, 3, 0.9, 0.8);
        CHECK(partition_quotient(c, 0.5).k == 1);
    }
    SUBCASE("chains close transitively") {
        NmiMatrix c = block_nmi(3, 3, 0.0, 0.0);
        c.values(0, 1) = c.values(1, 0) = 0.8;  // a-b
        c.values(1, 2) = c.values(2, 1) = 0.7;  // b-c
        c.values(0, 2) = c.values(2, 0) = 0.1;  // a-c weak
        const auto p = partition_quotient(c, 0.5);
        CHECK(p.k == 1);
        const auto labels = oracles::bfs_components(c.values, 0.5);
        CHECK(oracles::adjusted_rand(p.assignment, labels) == doctest::Approx(1.0));
    }
    SUBCASE("random tables agree with the oracle") {
        SeededRng rng(31337);
        for (int trial = 0; trial < 10; ++trial) {
            NmiMatrix c;
            c.dim = 10;
            c.values = Matrix(10, 10);
            for (std::size_t i = 0; i < 10; ++i) {
                c.values(i, i) = 1.0;
                for (std::size_t j = i + 1; j < 10; ++j) {
                    const double v = rng.uniform01();
                    c.values(i, j) = c.values(j, i) = v;
                }
            }
            const auto p = partition_quotient(c, 0.6);
            const auto labels = oracles::bfs_components(c.values, 0.6);
            CHECK(oracles::adjusted_rand(p.assignment, labels) == doctest::Approx(1.0));
        }
    }
    const NmiMatrix c = block_nmi(4, 2, 0.5, 0.1);
    CHECK_THROWS_AS(partition_quotient(c, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(partition_quotient(c, 1.5), std::invalid_argument);
}

TEST_CASE("ward and quotient agree on ideally separated data") {
    const NmiMatrix c = block_nmi(16, 4, 0.85, 0.08);
    const auto ward = partition_nmi_ward(c, 4);
    const auto quot = partition_quotient(c, 0.5);
    CHECK(quot.k == 4);
    CHECK(oracles::adjusted_rand(ward.assignment, quot.assignment) == doctest::Approx(1.0));
}

TEST_CASE("topological_regret") {
    const NmiMatrix c = block_nmi(12, 3, 0.9, 0.05);
    SUBCASE("single block has no cross pairs") {
        CHECK(topological_regret(BlockPartition::contiguous(12, 1), c) == 0.0);
    }
    SUBCASE("zero off-diagonal NMI gives zero regret for any partition") {
        const NmiMatrix z = block_nmi(12, 3, 0.0, 0.0);
        SeededRng rng(4);
        CHECK(topological_regret(partition_random(12, 4, rng), z) == 0.0);
    }
    SUBCASE("ground truth beats 100 seeded random partitions strictly") {
        const auto truth = BlockPartition::contiguous(12, 3);
        const double base = topological_regret(truth, c);
        for (std::uint64_t s = 0; s < 100; ++s) {
            SeededRng rng(s, 0xA1);
            const auto p = partition_random(12, 3, rng);
            if (p.assignment == truth.assignment) continue;
            CHECK(topological_regret(p, c) > base);
        }
    }
}

TEST_CASE("rebalance_equal moves lowest-attachment members") {
    NmiMatrix c = block_nmi(8, 2, 0.8, 0.1);
    // Unbalanced: 6 + 2.
    const auto p = BlockPartition::from_assignment({0, 0, 0, 0, 0, 0, 1, 1});
    const auto q = rebalance_equal(p, c);
    CHECK(q.equal_sized());
    CHECK(q.k == 2);
    CHECK(q.block_sizes[0] == 4);
}

TEST_CASE("cyclic_shift") {
    SUBCASE("k = 1 is the identity") {
        const auto p = BlockPartition::contiguous(4, 1);
        CHECK(cyclic_shift(p, 1).is_identity());
    }
    SUBCASE("k = 2 swaps halves; applying twice is the identity") {
        const auto p = BlockPartition::contiguous(4, 2);
        const auto s = cyclic_shift(p, 1);
        CHECK(s.mapping == std::vector<std::uint32_t>{2, 3, 0, 1});
        CHECK(s.compose(s).is_identity());
    }
    SUBCASE("k = 4: four successive single shifts compose to the identity") {
        const auto p = BlockPartition::contiguous(8, 4);
        const auto s = cyclic_shift(p, 1);
        auto acc = s;
        for (int i = 0; i < 3; ++i) acc = acc.compose(s);
        CHECK(acc.is_identity());
        // layer parameter = accumulated shift amount
        CHECK(cyclic_shift(p, 2).mapping == s.compose(s).mapping);
        CHECK(cyclic_shift(p, 4).is_identity());
    }
    SUBCASE("order of the cyclic group is k") {
        const auto p = BlockPartition::contiguous(12, 3);
        const auto s = cyclic_shift(p, 1);
        auto acc = s;
        std::size_t order = 1;
        while (!acc.is_identity()) {
            acc = acc.compose(s);
            ++order;
        }
        CHECK(order == 3);
    }
    SUBCASE("unequal blocks are rejected") {
        const auto p = BlockPartition::from_assignment({0, 0, 0, 1});
        CHECK_THROWS_AS(cyclic_shift(p, 1), std::invalid_argument);
    }
    SUBCASE("scattered blocks preserve within-block order") {
        // Blocks {0, 2} and {1, 3}: block 0 contents go to block 1 slots.
        const auto p = BlockPartition::from_assignment({0, 1, 0, 1});
        const auto s = cyclic_shift(p, 1);
        // mapping[dest] = source: slot order must be preserved.
        CHECK(s.mapping[1] == 0);
        CHECK(s.mapping[3] == 2);
        CHECK(s.mapping[0] == 1);
        CHECK(s.mapping[2] == 3);
    }
}

TEST_CASE("scale_threshold_check") {
    SUBCASE("k = 1 warns about the mixing infimum") {
        const auto rep = scale_threshold_check(BlockPartition::contiguous(8, 1), {3.0}, 1.5);
        CHECK_FALSE(rep.mixing_ok);
        CHECK_FALSE(rep.pass());
        REQUIRE(rep.warnings.size() >= 1);
        CHECK(rep.warnings[0].find("mixing infimum") != std::string::npos);
    }
    SUBCASE("block size 8 vs effrank 3 at gamma 1.5 passes") {
        const auto rep = scale_threshold_check(BlockPartition::contiguous(16, 2), {3.0, 3.0}, 1.5);
        CHECK(rep.pass());
        CHECK(rep.warnings.empty());
    }
    SUBCASE("block size 4 vs effrank 3.5 at gamma 1.5 warns") {
        const auto rep = scale_threshold_check(BlockPartition::contiguous(8, 2), {3.5, 1.0}, 1.5);
        CHECK(rep.mixing_ok);
        CHECK_FALSE(rep.capacity_ok[0]);
        CHECK(rep.capacity_ok[1]);
        CHECK_FALSE(rep.pass());
    }
    CHECK_THROWS_AS(scale_threshold_check(BlockPartition::contiguous(8, 2), {1.0}, 1.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(scale_threshold_check(BlockPartition::contiguous(8, 2), {1.0, 1.0}, 0.5),
                    std::invalid_argument);
}

TEST_CASE("shuffle schedules derive bijections") {
    const auto part = BlockPartition::contiguous(8, 4);
    SUBCASE("none yields no permutation") {
        CHECK_FALSE(ShuffleSchedule::none().perm_for_layer(0, 8, &part).has_value());
    }
    SUBCASE("random is deterministic per (seed, layer)") {
        const auto s = ShuffleSchedule::random(5);
        const auto p0 = s.perm_for_layer(0, 8, nullptr);
        const auto p0b = s.perm_for_layer(0, 8, nullptr);
        const auto p1 = s.perm_for_layer(1, 8, nullptr);
        REQUIRE(p0);
        CHECK(p0->mapping == p0b->mapping);
        CHECK(p0->mapping != p1->mapping);
        std::set<std::uint32_t> seen(p0->mapping.begin(), p0->mapping.end());
        CHECK(seen.size() == 8);
    }
    SUBCASE("cyclic: identity at layer 0, single step after") {
        const auto s = ShuffleSchedule::cyclic();
        CHECK_FALSE(s.perm_for_layer(0, 8, &part).has_value());
        const auto p1 = s.perm_for_layer(1, 8, &part);
        REQUIRE(p1);
        CHECK(p1->mapping == cyclic_shift(part, 1).mapping);
        CHECK(p1->mapping == s.perm_for_layer(2, 8, &part)->mapping);
    }
    SUBCASE("fixed returns the provided permutations") {
        SeededRng rng(2);
        auto perm = PermutationVec::random(8, rng);
        const auto s = ShuffleSchedule::fixed({perm});
        CHECK(s.perm_for_layer(0, 8, nullptr)->mapping == perm.mapping);
        CHECK_FALSE(s.perm_for_layer(1, 8, nullptr).has_value());
    }
}

TEST_SUITE_END();
