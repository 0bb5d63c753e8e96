#include "blocklab/synth.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "blocklab/linalg.hpp"

namespace blocklab {

namespace {

// Stream-id layout for batch generation: split tag in the top bits, batch
// index below. Parameter draws (targets, maps, permutations) use small fixed
// tags that can never collide with batch streams.
constexpr std::uint64_t kTrainTag = 0x1000000000000000ULL;
constexpr std::uint64_t kValTag = 0x2000000000000000ULL;
constexpr std::uint64_t kAnalysisTag = 0x3000000000000000ULL;

std::uint64_t batch_stream(Split split, std::uint64_t index) {
    return (split == Split::train ? kTrainTag : kValTag) | index;
}

}  // namespace

void TaskSpec::validate() const {
    if (dim == 0) throw std::invalid_argument("TaskSpec: dim must be > 0");
    if (groups == 0) throw std::invalid_argument("TaskSpec: groups must be > 0");
    if (noise_sigma < 0.0) throw std::invalid_argument("TaskSpec: noise_sigma must be >= 0");
    if (kind == TaskKind::extreme_modular || kind == TaskKind::factorized_manifold) {
        if (dim % groups != 0) {
            throw std::invalid_argument("TaskSpec: dim must be divisible by groups");
        }
        if (kind == TaskKind::extreme_modular && groups < 2) {
            throw std::invalid_argument("TaskSpec: extreme_modular needs groups >= 2");
        }
        if (kind == TaskKind::factorized_manifold && dim / groups < 2) {
            throw std::invalid_argument("TaskSpec: factorized_manifold needs group size >= 2");
        }
    }
}

TaskData gen_highrank_recovery(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind != TaskKind::highrank_recovery) {
        throw std::invalid_argument("gen_highrank_recovery: wrong task kind");
    }
    SeededRng target_rng(spec.seed, 0x7A);
    auto q = std::make_shared<Matrix>(random_orthogonal(spec.dim, target_rng));
    const double sigma = spec.noise_sigma;
    const std::size_t dim = spec.dim;
    const std::uint64_t seed = spec.seed;

    TaskData data;
    data.law = "highrank_recovery: x~N(0,I_" + std::to_string(dim) +
               "), y=Qx+eps, Q seeded random orthogonal, eps~N(0," +
               std::to_string(sigma) + "^2)";
    data.source.input_dim = dim;
    data.source.output_dim = dim;
    data.source.next = [q, sigma, dim, seed](Split split, std::uint64_t index,
                                             std::size_t batch) {
        SeededRng rng(seed, batch_stream(split, index));
        TaskBatch tb;
        tb.x = Matrix::gaussian(batch, dim, rng);
        tb.y = matmul_nt(tb.x, *q);  // rows are x^T, so y_row = x_row Q^T
        if (sigma > 0.0) {
            for (double& v : tb.y.data()) v += sigma * rng.normal();
        }
        return tb;
    };
    return data;
}

namespace {

struct ModularModel {
    std::vector<Matrix> maps;  // per-group, spectral norm 1
    PermutationVec perm;       // observed index -> base index (identity if unscrambled)
    std::size_t group_size = 0;
};

ModularModel build_modular_model(const TaskSpec& spec) {
    ModularModel m;
    m.group_size = spec.dim / spec.groups;
    m.maps.reserve(spec.groups);
    for (std::size_t g = 0; g < spec.groups; ++g) {
        SeededRng rng(spec.seed, 0x4D00 + g);
        Matrix a = Matrix::gaussian(m.group_size, m.group_size, rng);
        const double norm = operator_norm(a);
        if (norm > 0.0) a *= 1.0 / norm;
        m.maps.push_back(std::move(a));
    }
    if (spec.scramble) {
        SeededRng rng(spec.seed, 0x5C);
        m.perm = PermutationVec::random(spec.dim, rng);
    } else {
        m.perm = PermutationVec::identity(spec.dim);
    }
    return m;
}

}  // namespace

TaskData gen_extreme_modular(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind != TaskKind::extreme_modular) {
        throw std::invalid_argument("gen_extreme_modular: wrong task kind");
    }
    auto model = std::make_shared<ModularModel>(build_modular_model(spec));
    const std::size_t dim = spec.dim, groups = spec.groups, gs = model->group_size;
    const double sigma = spec.noise_sigma;
    const std::uint64_t seed = spec.seed;

    TaskData data;
    data.law = "extreme_modular: " + std::to_string(groups) + " groups of " + std::to_string(gs) +
               "; x_i = sqrt(1/2) s_g + sqrt(1/2) e_i; y_g = A_g x_g + eps, A_g seeded "
               "spectral-norm-1; eps~N(0," + std::to_string(sigma) + "^2)" +
               (spec.scramble ? "; features scrambled by a hidden seeded permutation" : "");
    data.hidden_permutation = model->perm;
    {
        // Ground truth on observed indices: observed feature i carries base
        // feature perm[i], whose group is perm[i] / group_size.
        std::vector<std::uint32_t> assignment(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            assignment[i] = static_cast<std::uint32_t>(model->perm.mapping[i] / gs);
        }
        data.true_partition = BlockPartition::from_assignment(std::move(assignment));
    }
    data.source.input_dim = dim;
    data.source.output_dim = dim;

    auto mptr = model;
    data.source.next = [mptr, dim, groups, gs, sigma, seed](Split split, std::uint64_t index,
                                                            std::size_t batch) {
        SeededRng rng(seed, batch_stream(split, index));
        TaskBatch tb;
        Matrix xbase(batch, dim), ybase(batch, dim);
        const double w = std::sqrt(0.5);
        std::vector<double> xg(gs), yg(gs);
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t g = 0; g < groups; ++g) {
                const double shared = rng.normal();
                for (std::size_t i = 0; i < gs; ++i) {
                    xg[i] = w * shared + w * rng.normal();
                    xbase(s, g * gs + i) = xg[i];
                }
                yg = matvec(mptr->maps[g], xg);
                for (std::size_t i = 0; i < gs; ++i) {
                    ybase(s, g * gs + i) = yg[i] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
                }
            }
        }
        tb.x = permute_cols(xbase, mptr->perm);
        tb.y = permute_cols(ybase, mptr->perm);
        return tb;
    };
    return data;
}

TaskData gen_factorized_manifold(const TaskSpec& spec) {
    spec.validate();
    if (spec.kind != TaskKind::factorized_manifold) {
        throw std::invalid_argument("gen_factorized_manifold: wrong task kind");
    }
    const std::size_t gs = spec.dim / spec.groups;
    const std::size_t latent = gs / 2;
    auto embeds = std::make_shared<std::vector<Matrix>>();
    embeds->reserve(spec.groups);
    for (std::size_t g = 0; g < spec.groups; ++g) {
        SeededRng rng(spec.seed, 0xFA00 + g);
        embeds->push_back(
            Matrix::gaussian(gs, latent, rng, 0.0, std::sqrt(1.0 / static_cast<double>(latent))));
    }
    const std::size_t dim = spec.dim, groups = spec.groups;
    const double sigma = spec.noise_sigma;
    const std::uint64_t seed = spec.seed;

    TaskData data;
    data.law = "factorized_manifold: " + std::to_string(groups) + " groups of " +
               std::to_string(gs) + "; x_g = E_g z, z~N(0,I_" + std::to_string(latent) +
               "), E_g seeded N(0,1/latent); target = input; input noise sigma " +
               std::to_string(sigma);
    data.latent_dims.assign(groups, latent);
    data.true_partition = BlockPartition::contiguous(dim, groups);
    data.source.input_dim = dim;
    data.source.output_dim = dim;
    data.source.next = [embeds, dim, groups, gs, latent, sigma, seed](
                           Split split, std::uint64_t index, std::size_t batch) {
        SeededRng rng(seed, batch_stream(split, index));
        TaskBatch tb;
        tb.x = Matrix(batch, dim);
        std::vector<double> z(latent), xg(gs);
        for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t g = 0; g < groups; ++g) {
                for (double& v : z) v = rng.normal();
                xg = matvec((*embeds)[g], z);
                for (std::size_t i = 0; i < gs; ++i) {
                    tb.x(s, g * gs + i) = xg[i] + (sigma > 0.0 ? sigma * rng.normal() : 0.0);
                }
            }
        }
        tb.y = tb.x;
        return tb;
    };
    return data;
}

TaskData make_task(const TaskSpec& spec) {
    switch (spec.kind) {
        case TaskKind::highrank_recovery:
            return gen_highrank_recovery(spec);
        case TaskKind::extreme_modular:
            return gen_extreme_modular(spec);
        case TaskKind::factorized_manifold:
            return gen_factorized_manifold(spec);
        case TaskKind::joint_dist:
            throw std::invalid_argument("make_task: joint_dist is served by gen_joint");
    }
    throw std::invalid_argument("make_task: unknown kind");
}

Matrix sample_inputs(const TaskSpec& spec, std::size_t n) {
    TaskData data = make_task(spec);
    // Pull one large pseudo-batch from the analysis stream so the draw is
    // disjoint from training and validation.
    TaskBatch tb = data.source.next(Split::train, kAnalysisTag, n);
    return tb.x;
}

JointHistogram gen_joint(JointKind kind, double strength, std::size_t card_x,
                         std::size_t card_y, std::size_t n, std::uint64_t seed) {
    if (card_x < 2 || card_y < 2) {
        throw std::invalid_argument("gen_joint: cardinalities must be >= 2");
    }
    if (n == 0) {
        throw std::invalid_argument("gen_joint: n must be > 0");
    }
    if (kind == JointKind::independent) strength = 0.0;
    if (strength < 0.0 || strength > 1.0) {
        throw std::invalid_argument("gen_joint: strength must be in [0, 1]");
    }

    SeededRng rng(seed, 0x901);
    const auto random_marginal = [&rng](std::size_t card) {
        std::vector<double> p(card);
        double total = 0.0;
        for (double& v : p) {
            v = rng.uniform(0.2, 1.0);
            total += v;
        }
        for (double& v : p) v /= total;
        return p;
    };
    const std::vector<double> px = random_marginal(card_x);
    const std::vector<double> py = random_marginal(card_y);
    const std::size_t diag = std::min(card_x, card_y);
    std::vector<double> pdiag(px.begin(), px.begin() + diag);
    {
        double total = 0.0;
        for (double v : pdiag) total += v;
        for (double& v : pdiag) v /= total;
    }

    const auto draw = [](SeededRng& r, const std::vector<double>& p) {
        const double u = r.uniform01();
        double cum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            cum += p[i];
            if (u < cum) return i;
        }
        return p.size() - 1;
    };

    SeededRng sample_rng(seed, 0x902);
    JointHistogram j(card_x, card_y);
    for (std::size_t s = 0; s < n; ++s) {
        const double u = sample_rng.uniform01();
        if (u < strength) {
            const std::size_t i = draw(sample_rng, pdiag);
            j.add(i, i);
        } else {
            const std::size_t x = draw(sample_rng, px);
            const std::size_t y = draw(sample_rng, py);
            j.add(x, y);
        }
    }
    return j;
}

}  // namespace blocklab
