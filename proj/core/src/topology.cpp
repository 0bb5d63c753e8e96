#include "blocklab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace blocklab {

BlockPartition BlockPartition::from_assignment(std::vector<std::uint32_t> assignment) {
    if (assignment.empty()) {
        throw std::invalid_argument("BlockPartition: empty assignment");
    }
    const std::uint32_t k = *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<std::size_t> sizes(k, 0);
    for (std::uint32_t b : assignment) ++sizes[b];
    for (std::size_t b = 0; b < k; ++b) {
        if (sizes[b] == 0) {
            throw std::invalid_argument("BlockPartition: block ids must be dense, block " +
                                        std::to_string(b) + " is empty");
        }
    }
    BlockPartition p;
    p.dim = assignment.size();
    p.k = k;
    p.assignment = std::move(assignment);
    p.block_sizes = std::move(sizes);
    return p;
}

BlockPartition BlockPartition::contiguous(std::size_t dim, std::size_t k) {
    if (k == 0 || k > dim || dim % k != 0) {
        throw std::invalid_argument("BlockPartition::contiguous: dim must be divisible by k");
    }
    std::vector<std::uint32_t> a(dim);
    const std::size_t bs = dim / k;
    for (std::size_t i = 0; i < dim; ++i) a[i] = static_cast<std::uint32_t>(i / bs);
    return from_assignment(std::move(a));
}

std::vector<std::uint32_t> BlockPartition::block_members(std::size_t block) const {
    std::vector<std::uint32_t> res;
    res.reserve(block_sizes[block]);
    for (std::size_t i = 0; i < dim; ++i)
        if (assignment[i] == block) res.push_back(static_cast<std::uint32_t>(i));
    return res;
}

bool BlockPartition::equal_sized() const {
    return std::all_of(block_sizes.begin(), block_sizes.end(),
                       [&](std::size_t s) { return s == block_sizes[0]; });
}

std::string BlockPartition::to_json() const {
    nlohmann::json j{{"dim", dim}, {"k", k}, {"assignment", assignment}};
    return j.dump();
}

BlockPartition BlockPartition::parse_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    auto assignment = j.at("assignment").get<std::vector<std::uint32_t>>();
    BlockPartition p = from_assignment(std::move(assignment));
    if (j.at("dim").get<std::size_t>() != p.dim || j.at("k").get<std::size_t>() != p.k) {
        throw std::invalid_argument("BlockPartition::parse_json: inconsistent dim/k");
    }
    return p;
}

BlockPartition partition_random(std::size_t dim, std::size_t k, SeededRng& rng) {
    if (k == 0 || k > dim) {
        throw std::invalid_argument("partition_random: need 1 <= k <= dim");
    }
    std::vector<std::uint32_t> order(dim);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    std::vector<std::uint32_t> assignment(dim, 0);
    const std::size_t base = dim / k, extra = dim % k;
    std::size_t pos = 0;
    for (std::size_t b = 0; b < k; ++b) {
        const std::size_t sz = base + (b < extra ? 1 : 0);
        for (std::size_t t = 0; t < sz; ++t) assignment[order[pos++]] = static_cast<std::uint32_t>(b);
    }
    return BlockPartition::from_assignment(std::move(assignment));
}

BlockPartition partition_nmi_ward(const NmiMatrix& c, std::size_t k) {
    const std::size_t d = c.dim;
    if (k == 0 || k > d) {
        throw std::invalid_argument("partition_nmi_ward: need 1 <= k <= dim");
    }

    // Active clusters; each remembers its lowest original member for
    // deterministic tie-breaking.
    struct Cluster {
        std::vector<std::uint32_t> members;
        std::uint32_t lowest;
        std::size_t size;
        bool alive;
    };
    std::vector<Cluster> cl(d);
    for (std::size_t i = 0; i < d; ++i) {
        cl[i] = {{static_cast<std::uint32_t>(i)}, static_cast<std::uint32_t>(i), 1, true};
    }

    std::vector<std::vector<double>> dist(d, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) dist[i][j] = 1.0 - c.values(i, j);

    std::size_t alive = d;
    while (alive > k) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < d; ++i) {
            if (!cl[i].alive) continue;
            for (std::size_t j = i + 1; j < d; ++j) {
                if (!cl[j].alive) continue;
                const double v = dist[i][j];
                const auto lo = std::minmax(cl[i].lowest, cl[j].lowest);
                const auto blo = std::minmax(cl[bi].lowest, cl[bj].lowest);
                if (v < best ||
                    (v == best && (lo.first < blo.first ||
                                   (lo.first == blo.first && lo.second < blo.second)))) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        // Lance-Williams update for Ward, applied to the dissimilarity table
        // with the usual squared-distance treatment.
        const double ni = static_cast<double>(cl[bi].size);
        const double nj = static_cast<double>(cl[bj].size);
        const double dij2 = dist[bi][bj] * dist[bi][bj];
        for (std::size_t t = 0; t < d; ++t) {
            if (!cl[t].alive || t == bi || t == bj) continue;
            const double nt = static_cast<double>(cl[t].size);
            const double dit2 = dist[bi][t] * dist[bi][t];
            const double djt2 = dist[bj][t] * dist[bj][t];
            const double num = (ni + nt) * dit2 + (nj + nt) * djt2 - nt * dij2;
            const double v = std::sqrt(std::max(0.0, num / (ni + nj + nt)));
            dist[bi][t] = v;
            dist[t][bi] = v;
        }
        cl[bi].members.insert(cl[bi].members.end(), cl[bj].members.begin(), cl[bj].members.end());
        cl[bi].lowest = std::min(cl[bi].lowest, cl[bj].lowest);
        cl[bi].size += cl[bj].size;
        cl[bj].alive = false;
        --alive;
    }

    // Relabel blocks by lowest member index.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < d; ++i)
        if (cl[i].alive) order.push_back(i);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return cl[a].lowest < cl[b].lowest; });

    std::vector<std::uint32_t> assignment(d, 0);
    for (std::size_t b = 0; b < order.size(); ++b) {
        for (std::uint32_t m : cl[order[b]].members) assignment[m] = static_cast<std::uint32_t>(b);
    }
    return BlockPartition::from_assignment(std::move(assignment));
}

BlockPartition partition_quotient(const NmiMatrix& c, double eps) {
    if (!(eps > 0.0 && eps <= 1.0)) {
        throw std::invalid_argument("partition_quotient: eps must be in (0, 1]");
    }
    const std::size_t d = c.dim;
    std::vector<std::uint32_t> parent(d);
    std::iota(parent.begin(), parent.end(), 0u);
    const auto find = [&](std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::uint32_t i = 0; i < d; ++i) {
        for (std::uint32_t j = i + 1; j < d; ++j) {
            if (c.values(i, j) >= eps) {
                const auto ri = find(i), rj = find(j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }
        }
    }
    // Dense ids in order of first appearance (lowest member first).
    std::vector<std::int64_t> label(d, -1);
    std::uint32_t next = 0;
    std::vector<std::uint32_t> assignment(d);
    for (std::uint32_t i = 0; i < d; ++i) {
        const auto r = find(i);
        if (label[r] < 0) label[r] = next++;
        assignment[i] = static_cast<std::uint32_t>(label[r]);
    }
    return BlockPartition::from_assignment(std::move(assignment));
}

BlockPartition rebalance_equal(const BlockPartition& p, const NmiMatrix& c) {
    if (p.dim != c.dim) {
        throw std::invalid_argument("rebalance_equal: dimension mismatch");
    }
    if (p.dim % p.k != 0) {
        throw std::invalid_argument("rebalance_equal: dim not divisible by k");
    }
    const std::size_t target = p.dim / p.k;
    std::vector<std::uint32_t> assignment = p.assignment;
    std::vector<std::size_t> sizes = p.block_sizes;

    const auto mean_nmi_to_block = [&](std::uint32_t feature, std::uint32_t block) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < p.dim; ++i) {
            if (assignment[i] == block && i != feature) {
                sum += c.values(feature, i);
                ++n;
            }
        }
        return n ? sum / static_cast<double>(n) : 0.0;
    };

    while (true) {
        std::int64_t over = -1;
        for (std::size_t b = 0; b < p.k; ++b) {
            if (sizes[b] > target && (over < 0 || sizes[b] > sizes[over])) over = static_cast<std::int64_t>(b);
        }
        if (over < 0) break;

        // Lowest-attachment member of the most over-full block.
        std::uint32_t worst = 0;
        double worst_score = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < p.dim; ++i) {
            if (assignment[i] != static_cast<std::uint32_t>(over)) continue;
            const double score = mean_nmi_to_block(static_cast<std::uint32_t>(i),
                                                   static_cast<std::uint32_t>(over));
            if (score < worst_score) {
                worst_score = score;
                worst = static_cast<std::uint32_t>(i);
            }
        }
        // Under-full block with the highest affinity for that member.
        std::int64_t dest = -1;
        double dest_score = -1.0;
        for (std::size_t b = 0; b < p.k; ++b) {
            if (sizes[b] >= target) continue;
            const double score = mean_nmi_to_block(worst, static_cast<std::uint32_t>(b));
            if (score > dest_score) {
                dest_score = score;
                dest = static_cast<std::int64_t>(b);
            }
        }
        --sizes[over];
        ++sizes[dest];
        assignment[worst] = static_cast<std::uint32_t>(dest);
    }
    return BlockPartition::from_assignment(std::move(assignment));
}

double topological_regret(const BlockPartition& p, const NmiMatrix& c) {
    if (p.dim != c.dim) {
        throw std::invalid_argument("topological_regret: dimension mismatch");
    }
    double regret = 0.0;
    for (std::size_t i = 0; i < p.dim; ++i) {
        for (std::size_t j = i + 1; j < p.dim; ++j) {
            if (p.assignment[i] != p.assignment[j]) regret += c.values(i, j);
        }
    }
    return regret;
}

PermutationVec cyclic_shift(const BlockPartition& p, std::size_t layer) {
    if (!p.equal_sized()) {
        throw std::invalid_argument("cyclic_shift: unsupported for unequal block sizes");
    }
    const std::size_t shift = layer % p.k;
    std::vector<std::vector<std::uint32_t>> members(p.k);
    for (std::size_t b = 0; b < p.k; ++b) members[b] = p.block_members(b);

    // Feature at source block b, slot t moves to the slot-t position of block
    // (b + shift) mod k. mapping[dest] = source per the permutation convention.
    std::vector<std::uint32_t> mapping(p.dim, 0);
    for (std::size_t b = 0; b < p.k; ++b) {
        const std::size_t dest_block = (b + shift) % p.k;
        for (std::size_t t = 0; t < members[b].size(); ++t) {
            mapping[members[dest_block][t]] = members[b][t];
        }
    }
    return PermutationVec::from_mapping(std::move(mapping));
}

ThresholdReport scale_threshold_check(const BlockPartition& p,
                                      const std::vector<double>& per_block_effrank,
                                      double gamma) {
    if (per_block_effrank.size() != p.k) {
        throw std::invalid_argument("scale_threshold_check: effrank count != block count");
    }
    if (gamma < 1.0) {
        throw std::invalid_argument("scale_threshold_check: gamma must be >= 1");
    }
    ThresholdReport rep;
    rep.mixing_ok = p.k >= 2;
    if (!rep.mixing_ok) {
        rep.warnings.push_back("mixing infimum violated: k < 2, no mixing possible");
    }
    rep.capacity_ok.resize(p.k, true);
    for (std::size_t b = 0; b < p.k; ++b) {
        const double need = gamma * per_block_effrank[b];
        if (static_cast<double>(p.block_sizes[b]) < need) {
            rep.capacity_ok[b] = false;
            rep.warnings.push_back("capacity infimum violated: block " + std::to_string(b) +
                                   " size " + std::to_string(p.block_sizes[b]) +
                                   " < gamma * effrank = " + std::to_string(need));
        }
    }
    return rep;
}

ShuffleSchedule ShuffleSchedule::none() { return {}; }

ShuffleSchedule ShuffleSchedule::random(std::uint64_t seed) {
    ShuffleSchedule s;
    s.kind = Kind::random;
    s.seed = seed;
    return s;
}

ShuffleSchedule ShuffleSchedule::cyclic() {
    ShuffleSchedule s;
    s.kind = Kind::cyclic;
    return s;
}

ShuffleSchedule ShuffleSchedule::fixed(std::vector<PermutationVec> perms) {
    ShuffleSchedule s;
    s.kind = Kind::fixed;
    s.fixed_perms = std::move(perms);
    return s;
}

std::optional<PermutationVec> ShuffleSchedule::perm_for_layer(
    std::size_t layer, std::size_t dim, const BlockPartition* partition) const {
    switch (kind) {
        case Kind::none:
            return std::nullopt;
        case Kind::random: {
            SeededRng rng(seed, 0xB10C0000ULL + layer);
            return PermutationVec::random(dim, rng);
        }
        case Kind::cyclic: {
            if (partition == nullptr) {
                throw std::invalid_argument("ShuffleSchedule: cyclic kind needs a partition");
            }
            if (layer == 0) return std::nullopt;  // topology set by the partition itself
            return cyclic_shift(*partition, 1);
        }
        case Kind::fixed: {
            if (layer >= fixed_perms.size()) return std::nullopt;
            if (fixed_perms[layer].size() != dim) {
                throw std::invalid_argument("ShuffleSchedule: fixed permutation has wrong length");
            }
            return fixed_perms[layer];
        }
    }
    return std::nullopt;
}

}  // namespace blocklab
