#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "blocklab/info.hpp"
#include "blocklab/matrix.hpp"
#include "blocklab/rng.hpp"

namespace blocklab {

/// Assignment of feature indices to k blocks. Block ids are dense in 0..k-1
/// and no block is empty.
struct BlockPartition {
    std::size_t dim = 0;
    std::size_t k = 0;
    std::vector<std::uint32_t> assignment;  // feature index -> block id
    std::vector<std::size_t> block_sizes;

    static BlockPartition from_assignment(std::vector<std::uint32_t> assignment);
    /// Equal contiguous blocks 0..k-1; dim must be divisible by k.
    static BlockPartition contiguous(std::size_t dim, std::size_t k);

    /// Feature indices of one block, ascending.
    std::vector<std::uint32_t> block_members(std::size_t block) const;
    bool equal_sized() const;

    std::string to_json() const;  // {dim, k, assignment}
    static BlockPartition parse_json(const std::string& text);

    bool operator==(const BlockPartition& o) const = default;
};

/// Sizes as equal as possible (differ by <= 1); assignment is a seeded
/// uniform shuffle of the feature indices.
BlockPartition partition_random(std::size_t dim, std::size_t k, SeededRng& rng);

/// Agglomerative clustering on dissimilarity 1 - NMI with the Ward
/// Lance-Williams update, cut at k clusters. Ties merge the pair with the
/// lowest original member indices. Blocks are relabeled by lowest member.
BlockPartition partition_nmi_ward(const NmiMatrix& c, std::size_t k);

/// Connected components of the graph {(i,j) : NMI >= eps} (transitive
/// closure); k is the component count.
BlockPartition partition_quotient(const NmiMatrix& c, double eps);

/// Moves lowest-attachment members (smallest mean within-block NMI) from
/// over-full blocks to the under-full block with the highest affinity until
/// all blocks have size dim/k. dim must be divisible by k.
BlockPartition rebalance_equal(const BlockPartition& p, const NmiMatrix& c);

/// Total NMI mass on unordered feature pairs split across different blocks.
double topological_regret(const BlockPartition& p, const NmiMatrix& c);

/// Permutation rotating block contents: with shift s = layer mod k, the
/// features of block i land in the positions of block (i + s) mod k,
/// within-block order preserved. cyclic_shift(p, 1) is the single-step
/// conveyor move; applying it k times is the identity. Requires equal block
/// sizes.
PermutationVec cyclic_shift(const BlockPartition& p, std::size_t layer);

struct ThresholdReport {
    bool mixing_ok = false;                  // k >= 2
    std::vector<bool> capacity_ok;           // per block
    std::vector<std::string> warnings;
    bool pass() const {
        if (!mixing_ok) return false;
        for (bool ok : capacity_ok) if (!ok) return false;
        return true;
    }
};

/// Advisory check: warns when k < 2 (mixing infimum) or when a block is
/// smaller than gamma times its data effective rank (capacity infimum).
/// Never blocks execution.
ThresholdReport scale_threshold_check(const BlockPartition& p,
                                      const std::vector<double>& per_block_effrank,
                                      double gamma);

/// Per-layer input permutations for a network. `none` yields no permutation,
/// `random` a fresh seeded permutation per layer, `cyclic` the conveyor
/// schedule (identity at layer 0, single-step block rotation afterwards),
/// `fixed` an explicit list.
struct ShuffleSchedule {
    enum class Kind { none, random, cyclic, fixed };
    Kind kind = Kind::none;
    std::uint64_t seed = 0;                 // random
    std::vector<PermutationVec> fixed_perms;  // fixed

    static ShuffleSchedule none();
    static ShuffleSchedule random(std::uint64_t seed);
    static ShuffleSchedule cyclic();
    static ShuffleSchedule fixed(std::vector<PermutationVec> perms);

    /// Permutation applied to the input of layer `layer` (nullopt = identity).
    /// The partition is required for the cyclic kind.
    std::optional<PermutationVec> perm_for_layer(std::size_t layer, std::size_t dim,
                                                 const BlockPartition* partition) const;
};

}  // namespace blocklab
